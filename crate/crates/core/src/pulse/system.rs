use std::f64::consts::TAU;

use num_complex::Complex;

use crate::error::{Result, SpinLabError};
use crate::linalg::Mat4;
use crate::spin::{
    build_hamiltonian, drive_operator, operators, transition_table, Channel, DensityMatrix, Hamiltonian, SystemConfig,
    TransitionTable,
};

/// Frequency response of the MW delivery chain, linearly interpolated
/// between calibration points and held flat outside them. Empty means ideal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TransferModel {
    /// `(frequency MHz, amplitude gain, phase shift rad)`, ascending in frequency.
    pub points: Vec<(f64, f64, f64)>,
}

impl TransferModel {
    pub fn flat() -> Self {
        Self::default()
    }

    /// Gain `g1` at `f1` and `g2` at `f2`, no phase shift.
    pub fn two_point(f1: f64, g1: f64, f2: f64, g2: f64) -> Self {
        let mut points = vec![(f1, g1, 0.0), (f2, g2, 0.0)];
        points.sort_by(|a, b| a.0.total_cmp(&b.0));
        Self { points }
    }

    /// `(gain, phase)` at `f`.
    pub fn response(&self, f: f64) -> (f64, f64) {
        let p = &self.points;
        match p.len() {
            0 => (1.0, 0.0),
            1 => (p[0].1, p[0].2),
            _ => {
                if f <= p[0].0 {
                    return (p[0].1, p[0].2);
                }
                if f >= p[p.len() - 1].0 {
                    let l = p[p.len() - 1];
                    return (l.1, l.2);
                }
                let k = p.partition_point(|x| x.0 <= f);
                let (a, b) = (p[k - 1], p[k]);
                let w = (f - a.0) / (b.0 - a.0);
                (a.1 + w * (b.1 - a.1), a.2 + w * (b.2 - a.2))
            }
        }
    }

    pub fn is_finite_at(&self, f: f64) -> bool {
        let (g, ph) = self.response(f);
        g.is_finite() && g > 0.0 && ph.is_finite()
    }
}

/// Optical pumping parameters of a LASER INIT segment.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LaserModel {
    /// Probability that the electron ends in down after one pulse.
    pub init_efficiency: f64,
    /// Nuclear depolarization per pulse (0 leaves the nucleus untouched).
    pub nuclear_depolarization: f64,
}

impl Default for LaserModel {
    fn default() -> Self {
        Self { init_efficiency: 1.0, nuclear_depolarization: 0.0 }
    }
}

/// Everything the propagators need about the device: Hamiltonian, its
/// dressed basis and transitions, drive couplings and hardware response.
#[derive(Clone, Debug)]
pub struct SpinSystem {
    pub config: SystemConfig<f64>,
    pub hamiltonian: Hamiltonian<f64>,
    pub table: TransitionTable<f64>,
    /// Drive operators in the dressed basis.
    pub d_mw: Mat4<f64>,
    pub d_rf: Mat4<f64>,
    /// Diagonal of the electron `S_z` in the dressed basis, the coupling of
    /// longitudinal detuning noise and AC fields.
    pub sz: [f64; 4],
    pub transfer: TransferModel,
    pub laser: LaserModel,
}

impl SpinSystem {
    pub fn new(config: &SystemConfig<f64>) -> Result<Self> {
        config.validate()?;
        let hamiltonian = build_hamiltonian(config)?;
        let table = transition_table(&hamiltonian, config)?;
        let basis = &table.basis;
        let d_mw = basis.to_dressed(&drive_operator(Channel::Mw, config));
        let d_rf = basis.to_dressed(&drive_operator(Channel::Rf, config));
        let szd = basis.to_dressed(&operators::s(2));
        let sz = [szd.m[0][0].re, szd.m[1][1].re, szd.m[2][2].re, szd.m[3][3].re];
        Ok(Self {
            config: config.clone(),
            hamiltonian,
            table,
            d_mw,
            d_rf,
            sz,
            transfer: TransferModel::flat(),
            laser: LaserModel::default(),
        })
    }

    pub fn with_transfer(mut self, transfer: TransferModel) -> Self {
        self.transfer = transfer;
        self
    }

    pub fn with_laser(mut self, laser: LaserModel) -> Self {
        self.laser = laser;
        self
    }

    pub fn drive(&self, channel: Channel) -> &Mat4<f64> {
        match channel {
            Channel::Mw => &self.d_mw,
            Channel::Rf => &self.d_rf,
        }
    }

    pub fn energies(&self) -> &[f64; 4] {
        &self.table.basis.energies
    }

    /// Interaction-frame state at time `t` to the lab frame, computational basis.
    pub fn to_lab(&self, rho: &Mat4<f64>, t: f64) -> Mat4<f64> {
        let f = self.free_phases(t);
        let rot = Mat4::from_fn(|i, j| rho.m[i][j] * f[i] * f[j].conj());
        self.table.basis.to_lab(&rot)
    }

    /// Inverse of [`Self::to_lab`].
    pub fn from_lab(&self, rho: &Mat4<f64>, t: f64) -> Mat4<f64> {
        let f = self.free_phases(t);
        let d = self.table.basis.to_dressed(rho);
        Mat4::from_fn(|i, j| d.m[i][j] * f[i].conj() * f[j])
    }

    /// Interaction-frame state at `t` to the dressed lab frame (no basis change).
    pub(crate) fn to_dressed_lab(&self, rho: &Mat4<f64>, t: f64) -> Mat4<f64> {
        let f = self.free_phases(t);
        Mat4::from_fn(|i, j| rho.m[i][j] * f[i] * f[j].conj())
    }

    #[allow(clippy::wrong_self_convention)]
    pub(crate) fn from_dressed_lab(&self, rho: &Mat4<f64>, t: f64) -> Mat4<f64> {
        let f = self.free_phases(t);
        Mat4::from_fn(|i, j| rho.m[i][j] * f[i].conj() * f[j])
    }

    /// `exp(-i 2 pi E_k t)`.
    fn free_phases(&self, t: f64) -> [Complex<f64>; 4] {
        let e = self.energies();
        std::array::from_fn(|k| Complex::from_polar(1.0, -TAU * e[k] * t))
    }

    /// Optical reset of the electron with the configured efficiency and
    /// nuclear depolarization, acting at time `t` in the dressed lab frame.
    pub fn laser_init(&self, rho: &DensityMatrix<f64>, t: f64) -> DensityMatrix<f64> {
        let lab = self.to_dressed_lab(rho.matrix(), t);
        let eta = self.laser.init_efficiency;
        let p = self.laser.nuclear_depolarization;
        // nuclear reduced state
        let rn = [[lab.m[0][0] + lab.m[2][2], lab.m[0][1] + lab.m[2][3]], [lab.m[1][0] + lab.m[3][2], lab.m[1][1] + lab.m[3][3]]];
        let mut reset = Mat4::zeros();
        for a in 0..2 {
            for b in 0..2 {
                reset.m[2 + a][2 + b] = rn[a][b];
            }
        }
        let mut out = reset.scale_re(eta) + lab.scale_re(1.0 - eta);
        if p > 0.0 {
            // rho -> (1 - p) rho + p rho_e (x) I/2
            let mixed = Mat4::from_fn(|i, j| {
                let (ei, ni) = (i / 2, i % 2);
                let (ej, nj) = (j / 2, j % 2);
                if ni == nj {
                    0.5 * (out.m[2 * ei][2 * ej] + out.m[2 * ei + 1][2 * ej + 1])
                } else {
                    Complex::new(0.0, 0.0)
                }
            });
            out = out.scale_re(1.0 - p) + mixed.scale_re(p);
        }
        DensityMatrix::from_matrix_unchecked(self.from_dressed_lab(&out, t).hermitian_part())
    }

    pub(crate) fn check_laser(&self) -> Result<()> {
        let l = &self.laser;
        if !(0.0..=1.0).contains(&l.init_efficiency) || !(0.0..=1.0).contains(&l.nuclear_depolarization) {
            return Err(SpinLabError::config("laser", "efficiency and depolarization must lie in [0, 1]"));
        }
        Ok(())
    }
}
