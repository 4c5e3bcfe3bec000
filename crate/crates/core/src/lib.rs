//! Core engine for a spoken-conversation ocean exhibit.
//!
//! A visitor's question flows through a visual decider, a query rewriter,
//! sentence-level retrieval over a curated corpus, and a persona responder.
//! The response text then drives keyword triggers, speech synthesis and
//! subtitles. A proximity-gated state machine decides when to listen.

pub mod agents;
pub mod config;
pub mod corpus;
pub mod grammar;
pub mod pipeline;
pub mod session;
pub mod triggers;
