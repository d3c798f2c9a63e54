use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt;

use super::sequence::{PulseSegment, PulseSequence, Tone};
use crate::error::{Result, SpinLabError};
use crate::spin::{Channel, Transition, TransitionLabel, TransitionTable};

/// Rotation axis in the transverse plane of the addressed transition.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum AxisPhase {
    #[default]
    PlusX,
    MinusX,
    PlusY,
    MinusY,
}

impl AxisPhase {
    pub const ALL: [AxisPhase; 4] = [Self::PlusX, Self::MinusX, Self::PlusY, Self::MinusY];

    pub fn radians(self) -> f64 {
        match self {
            Self::PlusX => 0.0,
            Self::MinusX => PI,
            Self::PlusY => FRAC_PI_2,
            Self::MinusY => -FRAC_PI_2,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "+x" | "x" => Some(Self::PlusX),
            "-x" => Some(Self::MinusX),
            "+y" | "y" => Some(Self::PlusY),
            "-y" => Some(Self::MinusY),
            _ => None,
        }
    }
}

impl fmt::Display for AxisPhase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::PlusX => "+x",
            Self::MinusX => "-x",
            Self::PlusY => "+y",
            Self::MinusY => "-y",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GateKind {
    /// Electron flip conditioned on nuclear up (MW1, pi).
    CnotE,
    /// Nuclear flip conditioned on electron down (RF1, pi).
    CnotN,
    /// Unconditional electron pi/2: both MW lines at once.
    LocalEPi2,
    LocalEPi,
    SelE(TransitionLabel, f64),
    SelN(TransitionLabel, f64),
    /// CNOT_E followed by CNOT_N.
    Swap,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GateSpec {
    pub kind: GateKind,
    pub axis: AxisPhase,
}

impl GateSpec {
    pub fn new(kind: GateKind, axis: AxisPhase) -> Self {
        Self { kind, axis }
    }

    pub fn x(kind: GateKind) -> Self {
        Self { kind, axis: AxisPhase::PlusX }
    }

    /// Parses `NAME[:axis]`, e.g. `SEL_N(RF1,pi/2):-y`, `CNOT_E`, `LOCAL_E_PI2:+y`.
    pub fn parse(text: &str) -> Result<Self> {
        let bad = || SpinLabError::Compile(format!("cannot parse gate `{text}`"));
        let (body, axis) = match text.rsplit_once(':') {
            Some((b, a)) => (b.trim(), AxisPhase::parse(a).ok_or_else(bad)?),
            None => (text.trim(), AxisPhase::PlusX),
        };
        let upper = body.to_ascii_uppercase();
        let kind = match upper.as_str() {
            "CNOT_E" => GateKind::CnotE,
            "CNOT_N" => GateKind::CnotN,
            "LOCAL_E_PI2" => GateKind::LocalEPi2,
            "LOCAL_E_PI" => GateKind::LocalEPi,
            "SWAP" => GateKind::Swap,
            _ => {
                let (name, args) = upper.split_once('(').ok_or_else(bad)?;
                let args = args.strip_suffix(')').ok_or_else(bad)?;
                let (label, angle) = args.split_once(',').ok_or_else(bad)?;
                let label = TransitionLabel::parse(label.trim())
                    .ok_or_else(|| SpinLabError::Compile(format!("unknown transition `{}`", label.trim())))?;
                let angle = parse_angle(angle.trim()).ok_or_else(bad)?;
                match name {
                    "SEL_E" => GateKind::SelE(label, angle),
                    "SEL_N" => GateKind::SelN(label, angle),
                    _ => return Err(bad()),
                }
            }
        };
        Ok(Self { kind, axis })
    }
}

/// `pi`, `pi/2`, `2pi`, `3pi/2` or a plain number of radians.
fn parse_angle(s: &str) -> Option<f64> {
    let s = s.to_ascii_lowercase().replace(' ', "");
    if let Ok(v) = s.parse::<f64>() {
        return Some(v);
    }
    let (num, den) = match s.split_once('/') {
        Some((n, d)) => (n.to_string(), d.parse::<f64>().ok()?),
        None => (s.clone(), 1.0),
    };
    let coef = num.strip_suffix("pi")?;
    let coef = if coef.is_empty() { 1.0 } else { coef.parse::<f64>().ok()? };
    Some(coef * PI / den)
}

impl fmt::Display for GateSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GateKind::CnotE => write!(f, "CNOT_E")?,
            GateKind::CnotN => write!(f, "CNOT_N")?,
            GateKind::LocalEPi2 => write!(f, "LOCAL_E_PI2")?,
            GateKind::LocalEPi => write!(f, "LOCAL_E_PI")?,
            GateKind::Swap => write!(f, "SWAP")?,
            GateKind::SelE(l, a) => write!(f, "SEL_E({l},{a:.6})")?,
            GateKind::SelN(l, a) => write!(f, "SEL_N({l},{a:.6})")?,
        }
        write!(f, ":{}", self.axis)
    }
}

/// Corrections applied to the second (MW2) tone of dual-tone gates.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DualToneCalibration {
    pub amplitude_scale_2: f64,
    pub phase_offset_2: f64,
}

impl Default for DualToneCalibration {
    fn default() -> Self {
        Self { amplitude_scale_2: 1.0, phase_offset_2: 0.0 }
    }
}

/// Bare tone amplitudes (MHz) per channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveAmplitudes {
    pub mw: f64,
    pub rf: f64,
}

impl DriveAmplitudes {
    /// Amplitudes giving effective Rabi frequencies `mw_eff` on MW1 and `rf_eff` on RF1.
    pub fn effective(table: &TransitionTable<f64>, mw_eff: f64, rf_eff: f64) -> Self {
        Self {
            mw: mw_eff / table.get(TransitionLabel::Mw1).enhancement(),
            rf: rf_eff / table.get(TransitionLabel::Rf1).enhancement(),
        }
    }

    fn for_channel(&self, c: Channel) -> f64 {
        match c {
            Channel::Mw => self.mw,
            Channel::Rf => self.rf,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct CompileOptions {
    /// Lower selective-pulse amplitudes so that the neighbouring line of the
    /// same channel completes whole generalized Rabi cycles.
    pub synchronize: bool,
}

/// Tone phase that rotates the addressed pair about `axis`, given which
/// level carries the flipped spin up.
fn tone_phase(t: &Transition<f64>, axis: f64) -> f64 {
    let arg = t.matrix_element.arg();
    let p = if t.up_is_upper { axis + arg } else { -axis - arg };
    p.rem_euclid(TAU)
}

fn neighbour(label: TransitionLabel) -> TransitionLabel {
    match label {
        TransitionLabel::Mw1 => TransitionLabel::Mw2,
        TransitionLabel::Mw2 => TransitionLabel::Mw1,
        TransitionLabel::Rf1 => TransitionLabel::Rf2,
        TransitionLabel::Rf2 => TransitionLabel::Rf1,
    }
}

/// Largest effective Rabi frequency not above `requested` for which a
/// detuned neighbour returns to its start after the pulse.
fn synchronized_rabi(requested: f64, angle: f64, detuning: f64, ratio: f64) -> f64 {
    let rt = ratio * angle;
    for k in 1..1_000_000u32 {
        let c = TAU * k as f64;
        if c <= rt {
            continue;
        }
        let omega = detuning * angle / (c * c - rt * rt).sqrt();
        if omega <= requested {
            return omega;
        }
    }
    requested
}

fn selective(
    gate: &GateSpec,
    label: TransitionLabel,
    angle: f64,
    table: &TransitionTable<f64>,
    drive: &DriveAmplitudes,
    opts: &CompileOptions,
) -> Result<PulseSegment> {
    let tr = table.get(label);
    let amp = drive.for_channel(label.channel());
    let mut omega = tr.enhancement() * amp;
    if opts.synchronize {
        let nb = table.get(neighbour(label));
        let detuning = (nb.frequency - tr.frequency).abs();
        omega = synchronized_rabi(omega, angle, detuning, nb.enhancement() / tr.enhancement());
    }
    let amplitude = omega / tr.enhancement();
    Ok(PulseSegment::drive(
        label.channel(),
        vec![Tone { frequency: tr.frequency, amplitude, phase: tone_phase(tr, gate.axis.radians()) }],
        angle / (TAU * omega),
        gate.to_string(),
    ))
}

fn local(
    gate: &GateSpec,
    angle: f64,
    table: &TransitionTable<f64>,
    calib: &DualToneCalibration,
    drive: &DriveAmplitudes,
) -> PulseSegment {
    let t1 = table.get(TransitionLabel::Mw1);
    let t2 = table.get(TransitionLabel::Mw2);
    let omega = t1.enhancement() * drive.mw;
    let axis = gate.axis.radians();
    let tones = vec![
        Tone { frequency: t1.frequency, amplitude: drive.mw, phase: tone_phase(t1, axis) },
        Tone {
            frequency: t2.frequency,
            amplitude: omega / t2.enhancement() * calib.amplitude_scale_2,
            phase: (tone_phase(t2, axis) + calib.phase_offset_2).rem_euclid(TAU),
        },
    ];
    PulseSegment::drive(Channel::Mw, tones, angle / (TAU * omega), gate.to_string())
}

/// Square-pulse realization of one gate.
pub fn compile_gate(
    gate: &GateSpec,
    table: &TransitionTable<f64>,
    calib: &DualToneCalibration,
    drive: &DriveAmplitudes,
    opts: &CompileOptions,
) -> Result<PulseSequence> {
    if !(calib.amplitude_scale_2 > 0.0 && calib.amplitude_scale_2.is_finite() && calib.phase_offset_2.is_finite()) {
        return Err(SpinLabError::Compile("dual-tone amplitude scale must be positive".into()));
    }
    let check_angle = |a: f64| {
        if a > 0.0 && a <= TAU + 1e-12 {
            Ok(())
        } else {
            Err(SpinLabError::Compile(format!("rotation angle {a} outside (0, 2 pi]")))
        }
    };
    let need = |c: Channel| {
        let a = drive.for_channel(c);
        if a > 0.0 && a.is_finite() {
            Ok(())
        } else {
            Err(SpinLabError::Compile(format!("{c:?} drive amplitude must be positive, got {a}")))
        }
    };
    let seg = match gate.kind {
        GateKind::CnotE => {
            need(Channel::Mw)?;
            selective(gate, TransitionLabel::Mw1, PI, table, drive, opts)?
        }
        GateKind::CnotN => {
            need(Channel::Rf)?;
            selective(gate, TransitionLabel::Rf1, PI, table, drive, opts)?
        }
        GateKind::SelE(label, angle) | GateKind::SelN(label, angle) => {
            let want = if matches!(gate.kind, GateKind::SelE(..)) { Channel::Mw } else { Channel::Rf };
            if label.channel() != want {
                return Err(SpinLabError::Compile(format!("{label} is not addressable by {gate}")));
            }
            check_angle(angle)?;
            need(want)?;
            selective(gate, label, angle, table, drive, opts)?
        }
        GateKind::LocalEPi2 | GateKind::LocalEPi => {
            need(Channel::Mw)?;
            let angle = if gate.kind == GateKind::LocalEPi2 { FRAC_PI_2 } else { PI };
            local(gate, angle, table, calib, drive)
        }
        GateKind::Swap => {
            let e = compile_gate(&GateSpec::new(GateKind::CnotE, gate.axis), table, calib, drive, opts)?;
            let n = compile_gate(&GateSpec::new(GateKind::CnotN, gate.axis), table, calib, drive, opts)?;
            return Ok(e.then(&n));
        }
    };
    Ok(PulseSequence::from_segments(vec![seg]))
}

/// Concatenation of compiled gates.
pub fn compile_program(
    gates: &[GateSpec],
    table: &TransitionTable<f64>,
    calib: &DualToneCalibration,
    drive: &DriveAmplitudes,
    opts: &CompileOptions,
) -> Result<PulseSequence> {
    let mut seq = PulseSequence::new();
    for g in gates {
        seq.extend(&compile_gate(g, table, calib, drive, opts)?);
    }
    Ok(seq)
}
