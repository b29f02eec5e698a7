//! Stuck/escape bookkeeping for the post-collision velocity window.
//!
//! Time is kept in integer control ticks so window boundaries are exact.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StuckTracker {
    sustain_ticks: u32,
    extension_ticks: u32,
    /// First tick of the current uninterrupted blocked stretch.
    blocked_since: Option<u32>,
    stuck_tick: Option<u32>,
    escape_tick: Option<u32>,
}

impl StuckTracker {
    pub fn new(sustain_ticks: u32, extension_ticks: u32) -> Self {
        StuckTracker { sustain_ticks, extension_ticks, blocked_since: None, stuck_tick: None, escape_tick: None }
    }

    pub fn reset(&mut self) {
        *self = StuckTracker::new(self.sustain_ticks, self.extension_ticks);
    }

    /// Advances the state machine at tick `now`.
    ///
    /// `body_contact` is any head/base/hip collision; `blocked` additionally
    /// requires the velocity along the command to be below the stuck speed.
    pub fn update(&mut self, now: u32, body_contact: bool, blocked: bool) {
        let stuck = self.stuck_tick.is_some() && self.escape_tick.is_none();
        if stuck {
            if !body_contact {
                self.escape_tick = Some(now);
                self.blocked_since = None;
            }
            return;
        }
        if blocked {
            let since = *self.blocked_since.get_or_insert(now);
            if now - since >= self.sustain_ticks {
                self.stuck_tick = Some(since + self.sustain_ticks);
                self.escape_tick = None;
                self.blocked_since = None;
            }
        } else {
            self.blocked_since = None;
        }
    }

    /// `t_stuck < t_now < t_escape + Δt`, with an open escape while still stuck.
    pub fn in_window(&self, now: u32) -> bool {
        match (self.stuck_tick, self.escape_tick) {
            (Some(s), None) => now > s,
            (Some(s), Some(e)) => now > s && now < e + self.extension_ticks,
            _ => false,
        }
    }

    pub fn stuck_tick(&self) -> Option<u32> {
        self.stuck_tick
    }

    pub fn escape_tick(&self) -> Option<u32> {
        self.escape_tick
    }

    pub fn is_stuck(&self) -> bool {
        self.stuck_tick.is_some() && self.escape_tick.is_none()
    }
}
