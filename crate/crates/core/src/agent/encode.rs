use alloc::vec::Vec;

use super::Message;
use crate::gridworld::{ListenerView, SpeakerView};

/// What arrived in one message slot of the listener input.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MessageSlot {
    /// Nothing delivered this step; encoded as five zeros.
    Empty,
    Delivered(Message),
}

/// Listener features: flattened view pixels followed by one 5-wide block per
/// message slot (one-hot when delivered, zeros otherwise).
pub fn encode_listener_input(view: &ListenerView, slots: &[MessageSlot]) -> Vec<f64> {
    let mut out = Vec::with_capacity(view.pixels().len() * 3 + slots.len() * Message::SYMBOLS);
    for px in view.pixels() {
        out.extend(px.0.iter().map(|v| f64::from(*v)));
    }
    for slot in slots {
        let mut block = [0.0; Message::SYMBOLS];
        if let MessageSlot::Delivered(m) = slot {
            block[usize::from(m.symbol())] = 1.0;
        }
        out.extend_from_slice(&block);
    }
    out
}

/// Speaker features: the rotated 9×9×3 map, flattened height-width-channel.
pub fn encode_speaker_input(view: &SpeakerView) -> Vec<f64> {
    let mut out = Vec::with_capacity(243);
    view.flatten_into(&mut out);
    out
}
