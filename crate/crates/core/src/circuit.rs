//! Reader–card–button coupled circuit.
//!
//! The three loops obey `v = Z i` with
//!
//! ```text
//!     | Z1        jw M12   jw M1p |
//! Z = | jw M12    Z2       jw M2p |      v = (v1, 0, 0)
//!     | jw M1p    jw M2p   Zp     |
//! ```
//!
//! Mutual inductances are built from geometric coupling factors (see
//! [`crate::coil`]) scaled by the circuit self inductances, which keeps the
//! inductance matrix positive definite whatever self inductances the circuit
//! parameters specify.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::coil::{
    button_positions, coupling_factor, mutual_inductance, self_inductance, ButtonGrid, CoilLayout,
    Inductance,
};
use crate::error::{Error, Result};

/// Carrier frequency of ISO/IEC 15693 (Hz).
pub const CARRIER_HZ: f64 = 13.56e6;

/// Lower and upper edge of the card activation band (Hz).
pub const ACTIVATION_BAND_HZ: (f64, f64) = (13.06e6, 14.06e6);

const J: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// Condition number beyond which the 3x3 solve is refused.
pub const MAX_CONDITION: f64 = 1e12;

/// Default button inductance. Large enough for a measurable imprint, small
/// enough that no button pulls the card resonance out of the activation band.
pub const BUTTON_INDUCTANCE_H: f64 = 50e-9;

pub fn angular(f_hz: f64) -> f64 {
    2.0 * PI * f_hz
}

/// Series-resonant capacitance `1 / ((2 pi f_c)^2 L)`.
pub fn tune_resonance(l_henry: f64, f_c: f64) -> Result<f64> {
    if !(l_henry > 0.0) || !(f_c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "tuning needs L > 0 and f_c > 0, got L = {l_henry}, f_c = {f_c}"
        )));
    }
    let w = angular(f_c);
    Ok(1.0 / (w * w * l_henry))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReaderCircuit {
    pub r1: f64,
    pub l1: f64,
    pub c1: f64,
    pub v1: f64,
    /// Reference impedance for S11.
    pub z0: f64,
}

impl ReaderCircuit {
    /// Table I reader (R1 = 1 ohm, L1 = 13.8 nH, v1 = 1 V, Z0 = 0.1 ohm), tuned to 13.56 MHz.
    pub fn reference() -> Self {
        let l1 = 13.8e-9;
        Self {
            r1: 1.0,
            l1,
            c1: tune_resonance(l1, CARRIER_HZ).expect("positive constants"),
            v1: 1.0,
            z0: 0.1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive(&[
            ("R1", self.r1),
            ("L1", self.l1),
            ("C1", self.c1),
            ("v1", self.v1),
            ("Z0", self.z0),
        ])
    }
}

/// Card antenna: `Z2 = R2 + jwL2 + (1/(jw C2) || R_L)` with `C2 = C2' + C_P`.
///
/// `modulation_on` is the load-modulation switch state `u`: when on, `C2'`
/// is disconnected and only `C_P` remains.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CardCircuit {
    pub r2: f64,
    pub l2: f64,
    pub c2_prime: f64,
    pub c_p: f64,
    pub r_load: f64,
    #[serde(default)]
    pub modulation_on: bool,
}

impl CardCircuit {
    /// Table I card (R2 = 0.35 ohm, L2 = 15.2 nH) with `C2' + C_P` tuned to the
    /// carrier and `C2'` carrying 10 % of the total.
    pub fn reference() -> Self {
        let l2 = 15.2e-9;
        let c2 = tune_resonance(l2, CARRIER_HZ).expect("positive constants");
        Self {
            r2: 0.35,
            l2,
            c2_prime: 0.1 * c2,
            c_p: 0.9 * c2,
            r_load: 50.0,
            modulation_on: false,
        }
    }

    pub fn with_modulation(self, on: bool) -> Self {
        Self {
            modulation_on: on,
            ..self
        }
    }

    /// Effective tank capacitance for the current switch state.
    pub fn c2(&self) -> f64 {
        if self.modulation_on {
            self.c_p
        } else {
            self.c2_prime + self.c_p
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive(&[
            ("R2", self.r2),
            ("L2", self.l2),
            ("C2'", self.c2_prime),
            ("C_P", self.c_p),
            ("R_L", self.r_load),
        ])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ButtonCircuit {
    pub rp: f64,
    pub lp: f64,
    pub cp: f64,
}

impl ButtonCircuit {
    /// Resonant button with `Rp` from Table I and the given coil inductance.
    pub fn tuned(rp: f64, lp: f64) -> Result<Self> {
        Ok(Self {
            rp,
            lp,
            cp: tune_resonance(lp, CARRIER_HZ)?,
        })
    }

    pub fn validate(&self) -> Result<()> {
        positive(&[("Rp", self.rp), ("Lp", self.lp), ("Cp", self.cp)])
    }
}

fn positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(*v > 0.0 && v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "{name} must be positive and finite, got {v}"
            )));
        }
    }
    Ok(())
}

pub fn reader_impedance(r: &ReaderCircuit, omega: f64) -> Complex64 {
    Complex64::new(r.r1, omega * r.l1 - 1.0 / (omega * r.c1))
}

pub fn card_impedance(c: &CardCircuit, omega: f64) -> Complex64 {
    // (1/(jwC)) || R_L = R_L / (1 + jw C R_L)
    let load = c.r_load / Complex64::new(1.0, omega * c.c2() * c.r_load);
    Complex64::new(c.r2, omega * c.l2) + load
}

pub fn button_impedance(b: &ButtonCircuit, omega: f64) -> Complex64 {
    Complex64::new(b.rp, omega * b.lp - 1.0 / (omega * b.cp))
}

/// Mutual inductances in henries.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Couplings {
    pub m12: f64,
    pub m1p: f64,
    pub m2p: f64,
}

/// Geometric coupling factors `k = M / sqrt(L_a L_b)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct CouplingFactors {
    pub k12: f64,
    pub k1p: f64,
    pub k2p: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoupledSystem {
    pub z: [[Complex64; 3]; 3],
    pub v: [Complex64; 3],
    pub couplings: Couplings,
    pub omega: f64,
}

impl CoupledSystem {
    /// Assembles the system. Without a button the third loop is an uncoupled
    /// unit resistance, so `ip` is identically zero.
    pub fn assemble(
        reader: &ReaderCircuit,
        card: &CardCircuit,
        button: Option<&ButtonCircuit>,
        couplings: Couplings,
        omega: f64,
    ) -> Self {
        let couplings = if button.is_some() {
            couplings
        } else {
            Couplings {
                m1p: 0.0,
                m2p: 0.0,
                ..couplings
            }
        };
        let z1 = reader_impedance(reader, omega);
        let z2 = card_impedance(card, omega);
        let zp = button
            .map(|b| button_impedance(b, omega))
            .unwrap_or(Complex64::new(1.0, 0.0));
        let x12 = J * (omega * couplings.m12);
        let x1p = J * (omega * couplings.m1p);
        let x2p = J * (omega * couplings.m2p);
        Self {
            z: [[z1, x12, x1p], [x12, z2, x2p], [x1p, x2p, zp]],
            v: [
                Complex64::new(reader.v1, 0.0),
                Complex64::default(),
                Complex64::default(),
            ],
            couplings,
            omega,
        }
    }

    pub fn is_symmetric(&self) -> bool {
        (0..3).all(|i| (0..3).all(|j| self.z[i][j] == self.z[j][i]))
    }
}

/// Loop currents `(i1, i2, ip)` in amperes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Currents {
    pub i1: Complex64,
    pub i2: Complex64,
    pub ip: Complex64,
}

impl Currents {
    pub fn as_array(&self) -> [Complex64; 3] {
        [self.i1, self.i2, self.ip]
    }
}

/// LU factorization with partial pivoting of a 3x3 complex matrix.
struct Lu3 {
    lu: [[Complex64; 3]; 3],
    perm: [usize; 3],
}

impl Lu3 {
    fn factor(m: &[[Complex64; 3]; 3]) -> Option<Self> {
        let mut lu = *m;
        let mut perm = [0, 1, 2];
        for k in 0..3 {
            let pivot = (k..3)
                .max_by(|&a, &b| lu[a][k].norm().total_cmp(&lu[b][k].norm()))
                .unwrap_or(k);
            if lu[pivot][k].norm() == 0.0 {
                return None;
            }
            lu.swap(k, pivot);
            perm.swap(k, pivot);
            for i in k + 1..3 {
                let f = lu[i][k] / lu[k][k];
                lu[i][k] = f;
                for j in k + 1..3 {
                    let t = lu[k][j];
                    lu[i][j] -= f * t;
                }
            }
        }
        Some(Self { lu, perm })
    }

    fn solve(&self, b: &[Complex64; 3]) -> [Complex64; 3] {
        let mut y = [Complex64::default(); 3];
        for i in 0..3 {
            let mut s = b[self.perm[i]];
            for j in 0..i {
                s -= self.lu[i][j] * y[j];
            }
            y[i] = s;
        }
        let mut x = [Complex64::default(); 3];
        for i in (0..3).rev() {
            let mut s = y[i];
            for j in i + 1..3 {
                s -= self.lu[i][j] * x[j];
            }
            x[i] = s / self.lu[i][i];
        }
        x
    }
}

fn norm1(m: &[[Complex64; 3]; 3]) -> f64 {
    (0..3)
        .map(|j| (0..3).map(|i| m[i][j].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// 1-norm condition number of `z`, infinite when singular.
pub fn condition_number(z: &[[Complex64; 3]; 3]) -> f64 {
    let Some(lu) = Lu3::factor(z) else {
        return f64::INFINITY;
    };
    let mut inv = [[Complex64::default(); 3]; 3];
    for j in 0..3 {
        let mut e = [Complex64::default(); 3];
        e[j] = Complex64::new(1.0, 0.0);
        let col = lu.solve(&e);
        for i in 0..3 {
            inv[i][j] = col[i];
        }
    }
    norm1(z) * norm1(&inv)
}

/// Solves `Z i = v` for the loop currents.
pub fn solve_system(sys: &CoupledSystem) -> Result<Currents> {
    let lu = Lu3::factor(&sys.z).ok_or(Error::SingularSystem {
        condition: f64::INFINITY,
    })?;
    let cond = condition_number(&sys.z);
    if !(cond < MAX_CONDITION) {
        return Err(Error::SingularSystem { condition: cond });
    }
    let i = lu.solve(&sys.v);
    Ok(Currents {
        i1: i[0],
        i2: i[1],
        ip: i[2],
    })
}

/// Relative residual `||v - Z i|| / ||v||`.
pub fn residual(sys: &CoupledSystem, currents: &Currents) -> f64 {
    let i = currents.as_array();
    let mut num = 0.0;
    let mut den = 0.0;
    for r in 0..3 {
        let zi: Complex64 = (0..3).map(|c| sys.z[r][c] * i[c]).sum();
        num += (sys.v[r] - zi).norm_sqr();
        den += sys.v[r].norm_sqr();
    }
    (num / den).sqrt()
}

/// Reflected impedance at the reader, `w^2 M12^2 / Z2 + w^2 M1p^2 / Zp`.
///
/// This neglects the card–button coupling; the full solve does not.
pub fn reflected_impedance(
    omega: f64,
    m12: f64,
    m1p: f64,
    z2: Complex64,
    zp: Complex64,
) -> Result<Complex64> {
    if z2.norm() == 0.0 || zp.norm() == 0.0 {
        return Err(Error::ZeroImpedance);
    }
    let w2 = omega * omega;
    Ok(w2 * m12 * m12 / z2 + w2 * m1p * m1p / zp)
}

/// Reader-port input impedance `v1 / i1` from the full solve.
pub fn input_impedance(sys: &CoupledSystem) -> Result<Complex64> {
    let i = solve_system(sys)?;
    Ok(sys.v[0] / i.i1)
}

pub fn reflection_coefficient(z_in: Complex64, z0: f64) -> Complex64 {
    (z_in - z0) / (z_in + z0)
}

/// Reader, card and button circuits plus the coil layout they sit in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Testbed {
    pub layout: CoilLayout,
    pub grid: ButtonGrid,
    pub reader: ReaderCircuit,
    pub card: CardCircuit,
    pub button: ButtonCircuit,
    pub carrier_hz: f64,
    /// Geometric self inductances (reader, card, button) used to normalize couplings.
    pub geometric_self: [f64; 3],
}

impl Testbed {
    /// Table I parameters with the default button inductance.
    pub fn reference() -> Result<Self> {
        let mut bed = Self::from_layout(
            CoilLayout::default(),
            ReaderCircuit::reference(),
            CardCircuit::reference(),
            1.5,
        )?;
        bed.button = ButtonCircuit::tuned(1.5, BUTTON_INDUCTANCE_H)?;
        Ok(bed)
    }

    pub fn from_layout(
        layout: CoilLayout,
        reader: ReaderCircuit,
        card: CardCircuit,
        button_resistance: f64,
    ) -> Result<Self> {
        layout.validate()?;
        reader.validate()?;
        card.validate()?;
        let l_reader = self_inductance(&layout.reader()?)?.0;
        let l_card = self_inductance(&layout.card()?)?.0;
        let l_button = self_inductance(&layout.button([0.0, 0.0])?)?.0;
        let button = ButtonCircuit::tuned(button_resistance, l_button)?;
        Ok(Self {
            layout,
            grid: ButtonGrid::default(),
            reader,
            card,
            button,
            carrier_hz: CARRIER_HZ,
            geometric_self: [l_reader, l_card, l_button],
        })
    }

    pub fn omega_c(&self) -> f64 {
        angular(self.carrier_hz)
    }

    /// Geometric coupling factors for a button at `button_xy` (None: no button)
    /// with the card displaced by `card_shift` (x, y, z) relative to the reader.
    pub fn coupling_factors(
        &self,
        button_xy: Option<[f64; 2]>,
        card_shift: [f64; 3],
    ) -> Result<CouplingFactors> {
        let [lr, lc, lb] = self.geometric_self.map(Inductance);
        let mut reader = self.layout.reader()?;
        for (c, s) in reader.center.iter_mut().zip(card_shift) {
            *c -= s;
        }
        let card = self.layout.card()?;
        let k12 = coupling_factor(mutual_inductance(&reader, &card)?, lr, lc)?;
        let (k1p, k2p) = match button_xy {
            Some(xy) => {
                let button = self.layout.button(xy)?;
                (
                    coupling_factor(mutual_inductance(&reader, &button)?, lr, lb)?,
                    coupling_factor(mutual_inductance(&card, &button)?, lc, lb)?,
                )
            }
            None => (0.0, 0.0),
        };
        Ok(CouplingFactors { k12, k1p, k2p })
    }

    /// Circuit mutual inductances from coupling factors and the circuit self inductances.
    pub fn couplings(&self, k: &CouplingFactors, card: &CardCircuit) -> Couplings {
        let l1 = self.reader.l1;
        let l2 = card.l2;
        let lp = self.button.lp;
        Couplings {
            m12: k.k12 * (l1 * l2).sqrt(),
            m1p: k.k1p * (l1 * lp).sqrt(),
            m2p: k.k2p * (l2 * lp).sqrt(),
        }
    }

    pub fn system(
        &self,
        k: &CouplingFactors,
        card: &CardCircuit,
        with_button: bool,
        omega: f64,
    ) -> CoupledSystem {
        CoupledSystem::assemble(
            &self.reader,
            card,
            with_button.then_some(&self.button),
            self.couplings(k, card),
            omega,
        )
    }

    /// Coupling factors for each of the nine buttons at nominal placement.
    pub fn button_factors(&self) -> Result<Vec<CouplingFactors>> {
        button_positions(&self.grid)
            .iter()
            .map(|&xy| self.coupling_factors(Some(xy), [0.0; 3]))
            .collect()
    }
}

pub fn frequency_grid(f_lo: f64, f_hi: f64, n_points: usize) -> Result<Vec<f64>> {
    if !(f_lo < f_hi) || !(f_lo > 0.0) || n_points < 2 {
        return Err(Error::InvalidArgument(format!(
            "sweep needs 0 < f_lo < f_hi and at least 2 points (got {f_lo}, {f_hi}, {n_points})"
        )));
    }
    let step = (f_hi - f_lo) / (n_points - 1) as f64;
    Ok((0..n_points).map(|i| f_lo + step * i as f64).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct S11Point {
    pub f_hz: f64,
    pub s11: Complex64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct S11Sweep {
    /// `None` for the card-only reference sweep.
    pub button: Option<usize>,
    pub points: Vec<S11Point>,
}

/// S11 at the reader port across `[f_lo, f_hi]`, for one button or none.
pub fn reflection_sweep(
    bed: &Testbed,
    f_lo: f64,
    f_hi: f64,
    n_points: usize,
    button: Option<usize>,
) -> Result<S11Sweep> {
    let grid = frequency_grid(f_lo, f_hi, n_points)?;
    let xy = button.map(|b| button_positions(&bed.grid)[b]);
    let k = bed.coupling_factors(xy, [0.0; 3])?;
    let points = grid
        .into_iter()
        .map(|f| {
            let sys = bed.system(&k, &bed.card, button.is_some(), angular(f));
            let z_in = input_impedance(&sys)?;
            Ok(S11Point {
                f_hz: f,
                s11: reflection_coefficient(z_in, bed.reader.z0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(S11Sweep { button, points })
}

/// `|i1|(f)` for the card alone and with each button, plus deviations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSweep {
    pub f_hz: Vec<f64>,
    pub baseline: Vec<f64>,
    /// `|i1|` per button, indexed 0..=8.
    pub per_button: Vec<Vec<f64>>,
}

impl CurrentSweep {
    /// `|i1|_button - |i1|_baseline` per button.
    pub fn deviation(&self, button: usize) -> Vec<f64> {
        self.per_button[button]
            .iter()
            .zip(&self.baseline)
            .map(|(a, b)| a - b)
            .collect()
    }

    /// Deviation normalized by the baseline.
    pub fn relative_deviation(&self, button: usize) -> Vec<f64> {
        self.per_button[button]
            .iter()
            .zip(&self.baseline)
            .map(|(a, b)| (a - b) / b)
            .collect()
    }

    pub fn max_abs_deviation(&self, button: usize) -> f64 {
        self.deviation(button)
            .into_iter()
            .map(f64::abs)
            .fold(0.0, f64::max)
    }
}

pub fn reader_current_per_button(bed: &Testbed, f_hz: &[f64]) -> Result<CurrentSweep> {
    let k_card = bed.coupling_factors(None, [0.0; 3])?;
    let magnitude = |k: &CouplingFactors, with_button: bool| -> Result<Vec<f64>> {
        f_hz.iter()
            .map(|&f| {
                let sys = bed.system(k, &bed.card, with_button, angular(f));
                Ok(solve_system(&sys)?.i1.norm())
            })
            .collect()
    };
    let baseline = magnitude(&k_card, false)?;
    let per_button = bed
        .button_factors()?
        .iter()
        .map(|k| magnitude(k, true))
        .collect::<Result<Vec<_>>>()?;
    Ok(CurrentSweep {
        f_hz: f_hz.to_vec(),
        baseline,
        per_button,
    })
}

/// Card resonance as seen from its own port: the frequency of peak
/// admittance magnitude, with the button (if any) loading the card coil.
pub fn card_resonance(
    bed: &Testbed,
    k: &CouplingFactors,
    with_button: bool,
    f_hz: &[f64],
) -> Result<f64> {
    let m2p = bed.couplings(k, &bed.card).m2p;
    let mut best = (f64::NEG_INFINITY, f_hz[0]);
    for &f in f_hz {
        let w = angular(f);
        let mut z = card_impedance(&bed.card, w);
        if with_button {
            z += reflected_impedance(
                w,
                0.0,
                m2p,
                Complex64::new(1.0, 0.0),
                button_impedance(&bed.button, w),
            )?;
        }
        if z.norm() == 0.0 {
            return Err(Error::ZeroImpedance);
        }
        let y = 1.0 / z.norm();
        if y > best.0 {
            best = (y, f);
        }
    }
    Ok(best.1)
}

/// Writes sweeps as `f_Hz,re_S11,im_S11,abs_S11,button_idx`; the card-only sweep uses index -1.
pub fn write_s11_csv<W: Write>(sweeps: &[S11Sweep], mut out: W) -> std::io::Result<()> {
    writeln!(out, "f_Hz,re_S11,im_S11,abs_S11,button_idx")?;
    for sweep in sweeps {
        let idx = sweep.button.map(|b| b as i64).unwrap_or(-1);
        for p in &sweep.points {
            writeln!(
                out,
                "{},{},{},{},{}",
                p.f_hz,
                p.s11.re,
                p.s11.im,
                p.s11.norm(),
                idx
            )?;
        }
    }
    Ok(())
}
