use super::{Proposal, Proposer, ProposerContext, ProposerError};

/// Returns previously recorded proposals in round order.
#[derive(Debug, Clone)]
pub struct ReplayProposer {
    proposals: Vec<Proposal>,
}

impl ReplayProposer {
    pub fn new(proposals: Vec<Proposal>) -> Self {
        Self { proposals }
    }
}

impl Proposer for ReplayProposer {
    fn name(&self) -> &str {
        "replay"
    }

    fn propose(&mut self, ctx: &ProposerContext) -> Result<Proposal, ProposerError> {
        self.proposals
            .get(ctx.round)
            .cloned()
            .ok_or(ProposerError::ReplayExhausted(ctx.round))
    }
}
