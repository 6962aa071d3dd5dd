use alloc::format;

use crate::{Error, Result};

/// Width of every Q-head (the five listener actions or the five symbols).
pub const ACTIONS: usize = 5;

/// Allowed widths of the encoder output.
pub const REP_SIZES: [usize; 3] = [8, 16, 32];

/// How the observation part of the input is turned into `rep_size` features.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Encoder {
    /// Two valid convolutions over a `side × side × channels` image. The
    /// second kernel spans the whole first-layer output, so it yields a
    /// `1 × 1 × rep_size` map.
    Conv {
        side: usize,
        channels: usize,
        filters: usize,
        kernel: usize,
        stride: usize,
    },
    /// One rectified dense layer; used for the 3-pixel strip or an empty view.
    Dense { inputs: usize },
}

impl Encoder {
    /// The 9×9×3 map encoder used by the speaker.
    pub const fn map() -> Self {
        Encoder::Conv {
            side: 9,
            channels: 3,
            filters: 8,
            kernel: 3,
            stride: 2,
        }
    }

    pub fn input_len(&self) -> usize {
        match *self {
            Encoder::Conv { side, channels, .. } => side * side * channels,
            Encoder::Dense { inputs } => inputs,
        }
    }

    /// Side of the first convolution's output map.
    pub(crate) fn conv1_side(&self) -> usize {
        match *self {
            Encoder::Conv {
                side,
                kernel,
                stride,
                ..
            } => (side - kernel) / stride + 1,
            Encoder::Dense { .. } => 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct NetworkSpec {
    pub encoder: Encoder,
    pub rep_size: usize,
    /// Extra inputs appended after encoding (the listener's message slots).
    pub aux_inputs: usize,
    pub hidden: usize,
    /// LSTM width, when the agent has memory.
    pub memory: Option<usize>,
    pub actions: usize,
}

impl NetworkSpec {
    pub fn input_len(&self) -> usize {
        self.encoder.input_len() + self.aux_inputs
    }

    pub fn has_memory(&self) -> bool {
        self.memory.is_some()
    }

    /// Width of the vector fed to the head.
    pub(crate) fn trunk_width(&self) -> usize {
        self.memory.unwrap_or(self.hidden)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m| Err(Error::Config(m));
        if !REP_SIZES.contains(&self.rep_size) {
            return bad(format!("rep_size {} not in {:?}", self.rep_size, REP_SIZES));
        }
        if self.actions != ACTIONS {
            return bad(format!("action count must be {ACTIONS}"));
        }
        if self.hidden == 0 || self.memory == Some(0) {
            return bad("layer widths must be positive".into());
        }
        if let Encoder::Conv {
            side,
            channels,
            filters,
            kernel,
            stride,
        } = self.encoder
        {
            if channels == 0 || filters == 0 || stride == 0 || kernel == 0 || kernel > side {
                return bad(format!("degenerate conv encoder {:?}", self.encoder));
            }
            if (side - kernel) % stride != 0 {
                return bad("conv stride does not tile the input".into());
            }
        }
        Ok(())
    }
}
