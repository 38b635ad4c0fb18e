pub mod answering;
pub mod config;
pub mod corpus;
pub mod evaluation;
pub mod fixtures;
pub mod llm;
pub mod moderation;
pub mod orchestrator;
pub mod pipeline;
pub mod retrieval;
pub mod service;
pub mod text;
