pub mod corpus;
pub mod discourse;
pub mod evaluation;
pub mod extraction;
pub mod gateway;
pub mod prompts;
pub mod sectioning;
pub mod text;
