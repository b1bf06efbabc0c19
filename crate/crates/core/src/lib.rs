pub mod analysis;
pub mod cli;
pub mod coarsen;
pub mod graph;
pub mod ingest;
pub mod model;
pub mod numeric;
pub mod re_head;
pub mod train;
