use std::fmt::{self, Write as _};

use crate::error::{Result, SpinLabError};
use crate::spin::Channel;

/// Optical operation of a laser segment.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum LaserMode {
    /// Optical pumping of the electron into down.
    Init,
    /// Fluorescence readout window; leaves the state untouched in simulation.
    Read,
}

/// One carrier inside a segment. `amplitude` is the Rabi frequency (MHz) the
/// tone would produce on a bare spin-1/2 transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tone {
    pub frequency: f64,
    pub amplitude: f64,
    pub phase: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SegmentKind {
    Drive(Channel),
    Laser(LaserMode),
    Idle,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PulseSegment {
    pub kind: SegmentKind,
    /// Simultaneous tones (drive segments only).
    pub tones: Vec<Tone>,
    /// Microseconds.
    pub duration: f64,
    /// Free-form tag carried into schedules, e.g. the gate that emitted it.
    pub label: String,
}

impl PulseSegment {
    pub fn drive(channel: Channel, tones: Vec<Tone>, duration: f64, label: impl Into<String>) -> Self {
        Self { kind: SegmentKind::Drive(channel), tones, duration, label: label.into() }
    }

    pub fn idle(duration: f64) -> Self {
        Self { kind: SegmentKind::Idle, tones: Vec::new(), duration, label: String::new() }
    }

    pub fn laser(mode: LaserMode, duration: f64) -> Self {
        Self { kind: SegmentKind::Laser(mode), tones: Vec::new(), duration, label: String::new() }
    }

    pub fn channel(&self) -> Option<Channel> {
        match self.kind {
            SegmentKind::Drive(c) => Some(c),
            _ => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return Err(SpinLabError::Domain(format!("segment duration {} must be finite and >= 0", self.duration)));
        }
        match self.kind {
            SegmentKind::Drive(_) => {
                for t in &self.tones {
                    if !(t.amplitude.is_finite() && t.amplitude >= 0.0) {
                        return Err(SpinLabError::Domain(format!("tone amplitude {} must be >= 0", t.amplitude)));
                    }
                    if !(t.frequency.is_finite() && t.frequency > 0.0 && t.phase.is_finite()) {
                        return Err(SpinLabError::Domain("tone frequency must be > 0 and phase finite".into()));
                    }
                }
            }
            _ if !self.tones.is_empty() => {
                return Err(SpinLabError::Domain("only drive segments carry tones".into()));
            }
            _ => {}
        }
        Ok(())
    }
}

/// Strictly sequential timeline of segments.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PulseSequence {
    pub segments: Vec<PulseSegment>,
}

impl PulseSequence {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_segments(segments: Vec<PulseSegment>) -> Self {
        Self { segments }
    }

    pub fn push(&mut self, segment: PulseSegment) -> &mut Self {
        self.segments.push(segment);
        self
    }

    pub fn extend(&mut self, other: &PulseSequence) -> &mut Self {
        self.segments.extend(other.segments.iter().cloned());
        self
    }

    pub fn then(mut self, other: &PulseSequence) -> Self {
        self.extend(other);
        self
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    /// Highest carrier frequency of any tone (MHz).
    pub fn max_tone_frequency(&self) -> f64 {
        self.segments.iter().flat_map(|s| s.tones.iter()).map(|t| t.frequency).fold(0.0, f64::max)
    }

    pub fn validate(&self) -> Result<()> {
        self.segments.iter().try_for_each(PulseSegment::validate)
    }

    /// One line per segment: channel, start, duration, tones.
    pub fn to_schedule(&self) -> String {
        let mut out = String::from("# channel start_us duration_us tones(freq_mhz:amp_mhz:phase_rad) label\n");
        let mut t = 0.0;
        for s in &self.segments {
            let chan = match s.kind {
                SegmentKind::Drive(Channel::Mw) => "MW",
                SegmentKind::Drive(Channel::Rf) => "RF",
                SegmentKind::Laser(LaserMode::Init) => "LASER:INIT",
                SegmentKind::Laser(LaserMode::Read) => "LASER:READ",
                SegmentKind::Idle => "IDLE",
            };
            let tones: Vec<String> =
                s.tones.iter().map(|x| format!("{:.6}:{:.6}:{:.6}", x.frequency, x.amplitude, x.phase)).collect();
            let tones = if tones.is_empty() { "-".to_string() } else { tones.join(",") };
            let label = if s.label.is_empty() { "-" } else { &s.label };
            let _ = writeln!(out, "{chan} {t:.6} {:.6} {tones} {label}", s.duration);
            t += s.duration;
        }
        out
    }
}

impl fmt::Display for PulseSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_schedule())
    }
}
