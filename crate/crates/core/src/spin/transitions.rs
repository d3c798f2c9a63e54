use std::fmt;

use super::config::SystemConfig;
use super::hamiltonian::{drive_operator, Channel, DressedBasis, Hamiltonian};
use crate::error::{Result, SpinLabError};
use crate::scalar::{Real, C};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransitionLabel {
    Mw1,
    Mw2,
    Rf1,
    Rf2,
}

impl TransitionLabel {
    pub const ALL: [TransitionLabel; 4] = [Self::Mw1, Self::Mw2, Self::Rf1, Self::Rf2];

    pub fn channel(self) -> Channel {
        match self {
            Self::Mw1 | Self::Mw2 => Channel::Mw,
            Self::Rf1 | Self::Rf2 => Channel::Rf,
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_uppercase().as_str() {
            "MW1" => Some(Self::Mw1),
            "MW2" => Some(Self::Mw2),
            "RF1" => Some(Self::Rf1),
            "RF2" => Some(Self::Rf2),
            _ => None,
        }
    }
}

impl fmt::Display for TransitionLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Mw1 => "MW1",
            Self::Mw2 => "MW2",
            Self::Rf1 => "RF1",
            Self::Rf2 => "RF2",
        })
    }
}

/// One hyperfine-resolved single-spin flip.
///
/// `up` and `down` are the dressed-state labels in which the flipped spin is
/// up or down; `matrix_element` is `<up|D|down>` for the channel's drive
/// operator, so a bare transition has magnitude 1/2.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<T: Real = f64> {
    pub label: TransitionLabel,
    pub frequency: T,
    pub up: usize,
    pub down: usize,
    pub matrix_element: C<T>,
    /// Whether `up` is the higher-energy level of the pair.
    pub up_is_upper: bool,
}

impl<T: Real> Transition<T> {
    pub fn magnitude(&self) -> T {
        self.matrix_element.norm()
    }

    /// Rabi frequency per unit bare amplitude, `2 |<up|D|down>|`.
    pub fn enhancement(&self) -> T {
        T::lit(2.0) * self.magnitude()
    }

    /// `(upper, lower)` energy-ordered state labels.
    pub fn levels(&self) -> (usize, usize) {
        if self.up_is_upper {
            (self.up, self.down)
        } else {
            (self.down, self.up)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TransitionTable<T: Real = f64> {
    pub entries: [Transition<T>; 4],
    pub basis: DressedBasis<T>,
}

impl<T: Real> TransitionTable<T> {
    pub fn get(&self, label: TransitionLabel) -> &Transition<T> {
        &self.entries[label as usize]
    }

    /// MW1/MW2 frequency difference.
    pub fn mw_splitting(&self) -> T {
        self.get(TransitionLabel::Mw2).frequency - self.get(TransitionLabel::Mw1).frequency
    }

    /// All six level-pair frequencies `(a, b, E_a - E_b)` for `a < b`.
    pub fn all_pairs(&self) -> Vec<(usize, usize, T)> {
        let e = &self.basis.energies;
        let mut out = Vec::with_capacity(6);
        for a in 0..4 {
            for b in (a + 1)..4 {
                out.push((a, b, e[a] - e[b]));
            }
        }
        out
    }

    /// The transition nearest `frequency` and its distance in MHz.
    pub fn nearest(&self, frequency: T) -> (&Transition<T>, T) {
        let mut best = &self.entries[0];
        let mut dist = (best.frequency - frequency).abs();
        for t in &self.entries[1..] {
            let d = (t.frequency - frequency).abs();
            if d < dist {
                best = t;
                dist = d;
            }
        }
        (best, dist)
    }
}

/// Diagonalizes `h` and classifies the four single-spin-flip transitions.
///
/// Electron flips are the pairs `(up_e x, dn_e x)`; the lower-frequency one is
/// MW1. Nuclear flips are `(x up_n, x dn_n)`; the lower-frequency one is RF1.
pub fn transition_table<T: Real>(h: &Hamiltonian<T>, config: &SystemConfig<T>) -> Result<TransitionTable<T>> {
    let basis = DressedBasis::new(h)?;
    let d_mw = basis.to_dressed(&drive_operator(Channel::Mw, config));
    let d_rf = basis.to_dressed(&drive_operator(Channel::Rf, config));
    let e = basis.energies;

    let make = |label, up: usize, down: usize, d: &crate::linalg::Mat4<T>| Transition {
        label,
        frequency: (e[up] - e[down]).abs(),
        up,
        down,
        matrix_element: d.m[up][down],
        up_is_upper: e[up] > e[down],
    };
    // (0,2): nuclear up, (1,3): nuclear down; (0,1): electron up, (2,3): electron down
    let mut mw = [make(TransitionLabel::Mw1, 0, 2, &d_mw), make(TransitionLabel::Mw1, 1, 3, &d_mw)];
    let mut rf = [make(TransitionLabel::Rf1, 0, 1, &d_rf), make(TransitionLabel::Rf1, 2, 3, &d_rf)];
    if mw[0].frequency > mw[1].frequency {
        mw.swap(0, 1);
    }
    if rf[0].frequency > rf[1].frequency {
        rf.swap(0, 1);
    }
    mw[1].label = TransitionLabel::Mw2;
    rf[1].label = TransitionLabel::Rf2;
    let entries = [mw[0], mw[1], rf[0], rf[1]];
    for t in &entries {
        if !(t.frequency > T::zero()) {
            return Err(SpinLabError::Degenerate { gap: t.frequency.to_f64_lossy() });
        }
    }
    Ok(TransitionTable { entries, basis })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spin::build_hamiltonian;
    use proptest::prelude::*;

    fn table(cfg: &SystemConfig<f64>) -> TransitionTable<f64> {
        transition_table(&build_hamiltonian(cfg).unwrap(), cfg).unwrap()
    }

    #[test]
    fn decoupled_rf_elements_are_bare() {
        let cfg = SystemConfig::decoupled(0.0735);
        let t = table(&cfg);
        for l in [TransitionLabel::Rf1, TransitionLabel::Rf2] {
            assert!((t.get(l).magnitude() - 0.5).abs() < 1e-12);
            assert!((t.get(l).frequency - cfg.gamma_n * 0.0735).abs() < 1e-9);
        }
        assert!((t.get(TransitionLabel::Mw1).magnitude() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn default_labels_follow_gate_convention() {
        let t = table(&SystemConfig::hbn_default());
        let mw1 = t.get(TransitionLabel::Mw1);
        let rf1 = t.get(TransitionLabel::Rf1);
        // CNOT_E conditioned on nuclear up, CNOT_N conditioned on electron down
        assert_eq!((mw1.up, mw1.down), (0, 2));
        assert_eq!((rf1.up, rf1.down), (2, 3));
        assert!(rf1.enhancement() > 10.0);
    }

    #[test]
    fn degenerate_spectrum_is_rejected() {
        let cfg = SystemConfig::<f64> { gamma_n: 0.0, ..SystemConfig::decoupled(0.0735) };
        let h = build_hamiltonian(&cfg).unwrap();
        assert!(matches!(transition_table(&h, &cfg), Err(SpinLabError::Degenerate { .. })));
    }

    proptest! {
        #[test]
        fn frequencies_invariant_under_energy_shift(c in -1e4f64..1e4) {
            let cfg = SystemConfig::hbn_default();
            let h = build_hamiltonian(&cfg).unwrap();
            let a = transition_table(&h, &cfg).unwrap();
            let b = transition_table(&h.shifted(c), &cfg).unwrap();
            for l in TransitionLabel::ALL {
                prop_assert!((a.get(l).frequency - b.get(l).frequency).abs() < 1e-7);
            }
        }
    }
}
