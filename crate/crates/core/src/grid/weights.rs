use serde::{Deserialize, Serialize};

use super::vocab::{Special, TokenId};

/// Which output stream a target token belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StreamKind {
    /// Transcription stream (and the stage-1 text stream).
    Avsr,
    /// Turn-event stream of the dual model.
    Turn,
    /// Interleaved turn-event + response stream of the unified model.
    Unified,
}

/// Per-token cross-entropy weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub text: f64,
    pub emp: f64,
    pub sot: f64,
    pub backchannel: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            text: 1.0,
            emp: 0.1,
            sot: 2.5,
            backchannel: 1.0,
        }
    }
}

impl LossWeights {
    pub fn scaled(self, c: f64) -> Self {
        Self {
            text: self.text * c,
            emp: self.emp * c,
            sot: self.sot * c,
            backchannel: self.backchannel * c,
        }
    }

    pub fn weight(&self, token: TokenId, stream: StreamKind) -> f64 {
        match Special::from_id(token) {
            Some(Special::Null) => 0.0,
            Some(Special::Emp) => self.emp,
            Some(Special::Sot) => match stream {
                StreamKind::Turn | StreamKind::Unified => self.sot,
                StreamKind::Avsr => self.text,
            },
            Some(Special::Backchannel) => match stream {
                StreamKind::Turn | StreamKind::Unified => self.backchannel,
                StreamKind::Avsr => self.text,
            },
            // text pieces, task prefixes, BOS/EOS
            _ => self.text,
        }
    }
}

/// Weight under the default table.
pub fn loss_weight_of(token: TokenId, stream: StreamKind) -> f64 {
    LossWeights::default().weight(token, stream)
}
