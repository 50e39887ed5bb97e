//! Front ends for the songseek engine: the `songseek` command line tool
//! and its HTTP API. Both turn a [`request::QueryRequest`] into a query and
//! call the same `SearchEngine::execute`.

pub mod cli;
pub mod http;
pub mod request;

pub use request::QueryRequest;
