//! LSTM cell with hand-written BPTT, the bidirectional wrapper, and dropout.

mod bilstm;
mod dropout;
mod lstm;

pub use bilstm::{BiLstmCache, BiLstmGrads, BiLstmLayer, BiMode};
pub use dropout::{DropoutLayer, DropoutMask};
pub use lstm::{
    lstm_bptt, lstm_forward, lstm_step, GateWeights, LstmCache, LstmParams, Peepholes, StepCache,
    GATE_NAMES,
};
