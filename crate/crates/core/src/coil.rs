//! Self and mutual inductance of planar multi-turn circular loops, and the
//! virtual button grid on an ID-1 card.
//!
//! Mutual inductance uses the Bessel-integral form for two coaxial-parallel
//! loops with lateral offset `p` and axial gap `dz`:
//!
//! ```text
//! M = mu0 * pi * n_i * n_q * a_i * a_q * Int_0^inf J0(s p) J1(s a_i) J1(s a_q) exp(-s |dz|) ds
//! ```
//!
//! Each turn is a filament at the coil radius, so a multi-turn coil is `n`
//! co-located filaments. The filament self term diverges; self inductance is
//! regularized by displacing a copy of the loop axially by the wire radius.
//!
//! Note: the default circuit parameters (reader 13.8 nH, card 15.2 nH) are
//! far below what these formulas give for the listed coil radii (microhenry
//! scale). The circuit layer therefore carries geometric *coupling factors*
//! over to the circuit inductances instead of raw mutual inductances.

use std::f64::consts::PI;
use std::fmt;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quadrature::{integrate_panels, QuadratureConfig};

/// Permeability of free space (H/m).
pub const MU0: f64 = 4.0e-7 * PI;

/// Integrand truncation: `exp(-s * dz_eff)` falls below this at the cutoff.
const TAIL: f64 = 1e-12;

/// Past this many oscillation panels the pair is treated as far-field dipoles.
const MAX_PANELS: usize = 60_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilGeometry {
    pub radius_m: f64,
    pub turns: u32,
    pub center: [f64; 3],
    #[serde(default = "default_wire_radius")]
    pub wire_radius_m: f64,
}

fn default_wire_radius() -> f64 {
    0.5e-3
}

impl CoilGeometry {
    pub fn new(radius_m: f64, turns: u32, center: [f64; 3], wire_radius_m: f64) -> Result<Self> {
        let c = Self {
            radius_m,
            turns,
            center,
            wire_radius_m,
        };
        c.validate()?;
        Ok(c)
    }

    /// Coil at the origin with the default 0.5 mm wire radius.
    pub fn at_origin(radius_m: f64, turns: u32) -> Result<Self> {
        Self::new(radius_m, turns, [0.0; 3], default_wire_radius())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius_m > 0.0 && self.radius_m.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "coil radius must be positive, got {}",
                self.radius_m
            )));
        }
        if self.turns == 0 {
            return Err(Error::InvalidArgument(
                "coil needs at least one turn".into(),
            ));
        }
        if !(self.wire_radius_m > 0.0 && self.wire_radius_m < self.radius_m) {
            return Err(Error::InvalidArgument(format!(
                "wire radius {} must lie in (0, {})",
                self.wire_radius_m, self.radius_m
            )));
        }
        if self.center.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("coil center must be finite".into()));
        }
        Ok(())
    }

    /// Same coil moved to `center`.
    pub fn moved_to(&self, center: [f64; 3]) -> Self {
        Self { center, ..*self }
    }
}

/// Inductance in henries.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Inductance(pub f64);

impl Inductance {
    pub fn henries(self) -> f64 {
        self.0
    }
}

impl fmt::Display for Inductance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.6e} H", self.0)
    }
}

/// Lateral offset and axial gap between two coil centers.
pub fn separation(ci: &CoilGeometry, cq: &CoilGeometry) -> (f64, f64) {
    let dx = ci.center[0] - cq.center[0];
    let dy = ci.center[1] - cq.center[1];
    let dz = ci.center[2] - cq.center[2];
    (dx.hypot(dy), dz.abs())
}

/// Mutual inductance between two parallel-plane loops.
pub fn mutual_inductance(ci: &CoilGeometry, cq: &CoilGeometry) -> Result<Inductance> {
    mutual_inductance_with(ci, cq, &QuadratureConfig::default())
}

pub fn mutual_inductance_with(
    ci: &CoilGeometry,
    cq: &CoilGeometry,
    cfg: &QuadratureConfig,
) -> Result<Inductance> {
    ci.validate()?;
    cq.validate()?;
    let (p, dz) = separation(ci, cq);
    if dz == 0.0 && p == 0.0 && ci.radius_m == cq.radius_m {
        return Err(Error::CoincidentFilaments);
    }
    let wire = ci.wire_radius_m.min(cq.wire_radius_m);
    mutual_filament(
        ci.radius_m,
        cq.radius_m,
        ci.turns,
        cq.turns,
        p,
        dz,
        wire,
        cfg,
    )
    .map(Inductance)
}

#[allow(clippy::too_many_arguments)]
fn mutual_filament(
    ai: f64,
    aq: f64,
    ni: u32,
    nq: u32,
    p: f64,
    dz: f64,
    wire: f64,
    cfg: &QuadratureConfig,
) -> Result<f64> {
    let prefactor = MU0 * PI * (ni as f64 * nq as f64) * (ai * aq);
    let dz_eff = dz.max(wire);
    let s_max = -TAIL.ln() / dz_eff;
    // One panel per half period of the fastest oscillation.
    let panels = (s_max * (p + ai + aq) / PI).ceil() as usize;
    let r = p.hypot(dz);
    if panels > MAX_PANELS && r > 50.0 * (ai + aq) {
        return Ok(dipole_mutual(ai, aq, ni, nq, p, dz));
    }
    let integrand = |s: f64| {
        let j0 = if p == 0.0 { 1.0 } else { libm::j0(s * p) };
        j0 * libm::j1(s * ai) * libm::j1(s * aq) * (-s * dz).exp()
    };
    let cfg = QuadratureConfig {
        // The integral scales as 1/length; floor the tolerance so sign changes
        // near zero coupling do not stall the refinement.
        abs_tol: cfg.abs_tol.max(cfg.rel_tol * 1e-3 / ai.max(aq)),
        ..*cfg
    };
    let est = integrate_panels(integrand, 0.0, s_max, panels.max(8), &cfg)?;
    Ok(prefactor * est.value)
}

/// Far-field limit: two magnetic dipoles `n pi a^2` along z.
pub fn dipole_mutual(ai: f64, aq: f64, ni: u32, nq: u32, p: f64, dz: f64) -> f64 {
    let r2 = p * p + dz * dz;
    let r = r2.sqrt();
    let cos2 = dz * dz / r2;
    MU0 * PI * (ni as f64 * nq as f64) * (ai * ai) * (aq * aq) * (3.0 * cos2 - 1.0) / (4.0 * r2 * r)
}

/// Regularized self inductance: the loop against itself displaced by one wire radius.
pub fn self_inductance(c: &CoilGeometry) -> Result<Inductance> {
    self_inductance_with(c, &QuadratureConfig::default())
}

pub fn self_inductance_with(c: &CoilGeometry, cfg: &QuadratureConfig) -> Result<Inductance> {
    c.validate()?;
    let l = mutual_filament(
        c.radius_m,
        c.radius_m,
        c.turns,
        c.turns,
        0.0,
        c.wire_radius_m,
        c.wire_radius_m,
        cfg,
    )?;
    Ok(Inductance(l))
}

/// `M / sqrt(L1 * Lp)`.
pub fn coupling_factor(m: Inductance, l1: Inductance, lp: Inductance) -> Result<f64> {
    if !(l1.0 > 0.0) || !(lp.0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "self inductances must be positive, got {} and {}",
            l1.0, lp.0
        )));
    }
    Ok(m.0 / (l1.0 * lp.0).sqrt())
}

/// The 3x3 virtual button grid, offsets from the card center in meters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ButtonGrid {
    pub card_width_m: f64,
    pub card_height_m: f64,
    pub positions: [[f64; 2]; 9],
}

/// Button centers, row-major from the top-left (Button 0) to bottom-right (Button 8).
pub const BUTTON_OFFSETS_MM: [[f64; 2]; 9] = [
    [-27.5, 18.0],
    [0.0, 18.0],
    [27.5, 18.0],
    [-27.5, 0.0],
    [0.0, 0.0],
    [27.5, 0.0],
    [-27.5, -18.0],
    [0.0, -18.0],
    [27.5, -18.0],
];

pub const CARD_WIDTH_M: f64 = 85.6e-3;
pub const CARD_HEIGHT_M: f64 = 55.0e-3;

impl Default for ButtonGrid {
    fn default() -> Self {
        Self::new(CARD_WIDTH_M, CARD_HEIGHT_M).expect("default card holds the grid")
    }
}

impl ButtonGrid {
    /// Standard grid on a card of the given size; the offsets are absolute and
    /// must fit on the card.
    pub fn new(card_width_m: f64, card_height_m: f64) -> Result<Self> {
        let positions = BUTTON_OFFSETS_MM.map(|[x, y]| [x / 1e3, y / 1e3]);
        let fits = positions
            .iter()
            .all(|[x, y]| x.abs() <= card_width_m / 2.0 && y.abs() <= card_height_m / 2.0);
        if !fits {
            return Err(Error::InvalidArgument(format!(
                "button grid does not fit a {:.1} x {:.1} mm card",
                card_width_m * 1e3,
                card_height_m * 1e3
            )));
        }
        Ok(Self {
            card_width_m,
            card_height_m,
            positions,
        })
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,x_mm,y_mm")?;
        for (i, [x, y]) in button_positions(self).iter().enumerate() {
            writeln!(out, "{i},{},{}", x * 1e3, y * 1e3)?;
        }
        Ok(())
    }
}

/// Button offsets `(x, y)` in meters, indexed 0..=8.
pub fn button_positions(grid: &ButtonGrid) -> [[f64; 2]; 9] {
    grid.positions
}

/// Coil geometry of the reader/card/button stack, read from a TOML file.
///
/// Coordinates are in the card frame: origin at the card center, z toward
/// the button side. The reader sits `reader_gap_m` below the card.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoilLayout {
    pub reader_radius_m: f64,
    pub reader_turns: u32,
    pub card_radius_m: f64,
    pub card_turns: u32,
    pub button_radius_m: f64,
    pub button_turns: u32,
    pub wire_radius_m: f64,
    /// Reader center relative to the card center, in the card plane.
    pub reader_offset_m: [f64; 2],
    pub reader_gap_m: f64,
    pub button_height_m: f64,
}

impl Default for CoilLayout {
    fn default() -> Self {
        Self {
            reader_radius_m: 0.0415,
            reader_turns: 3,
            card_radius_m: 0.0308,
            card_turns: 3,
            button_radius_m: 0.0102,
            button_turns: 2,
            wire_radius_m: 0.5e-3,
            // Toward Button 0 by 30.28 mm along the width and 12.47 mm along the height.
            reader_offset_m: [-30.28e-3, 12.47e-3],
            reader_gap_m: 5.0e-3,
            button_height_m: 1.0e-3,
        }
    }
}

impl CoilLayout {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let layout: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        layout.validate()?;
        Ok(layout)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<()> {
        self.reader()?;
        self.card()?;
        self.button([0.0, 0.0])?;
        if !(self.reader_gap_m > 0.0) || !(self.button_height_m > 0.0) {
            return Err(Error::Config(
                "reader gap and button height must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn reader(&self) -> Result<CoilGeometry> {
        CoilGeometry::new(
            self.reader_radius_m,
            self.reader_turns,
            [
                self.reader_offset_m[0],
                self.reader_offset_m[1],
                -self.reader_gap_m,
            ],
            self.wire_radius_m,
        )
    }

    pub fn card(&self) -> Result<CoilGeometry> {
        CoilGeometry::new(
            self.card_radius_m,
            self.card_turns,
            [0.0; 3],
            self.wire_radius_m,
        )
    }

    /// Button coil centered at `xy` on the card.
    pub fn button(&self, xy: [f64; 2]) -> Result<CoilGeometry> {
        CoilGeometry::new(
            self.button_radius_m,
            self.button_turns,
            [xy[0], xy[1], self.button_height_m],
            self.wire_radius_m,
        )
    }
}

/// Coupling factor `k(p, dz)` of one coil pair, tabulated on a regular grid
/// and interpolated with Catmull–Rom cubics in both directions.
///
/// Quadrature per evaluation costs milliseconds; dataset synthesis evaluates
/// couplings for every press under placement jitter, so it goes through this table.
#[derive(Debug, Clone)]
pub struct CouplingTable {
    p_min: f64,
    p_step: f64,
    dz_min: f64,
    dz_step: f64,
    n_p: usize,
    n_dz: usize,
    values: Vec<f64>,
}

impl CouplingTable {
    /// Tabulates `M(p, dz) / sqrt(L_a L_b)` over `p_range x dz_range`.
    ///
    /// With a degenerate `dz_range` (equal ends) the table is one-dimensional.
    pub fn build(
        a: &CoilGeometry,
        b: &CoilGeometry,
        p_range: (f64, f64),
        dz_range: (f64, f64),
        step: f64,
    ) -> Result<Self> {
        if !(step > 0.0) || p_range.1 < p_range.0 || dz_range.1 < dz_range.0 {
            return Err(Error::InvalidArgument("bad coupling table ranges".into()));
        }
        let la = self_inductance(a)?;
        let lb = self_inductance(b)?;
        let n_p = ((p_range.1 - p_range.0) / step).ceil() as usize + 1;
        let n_dz = ((dz_range.1 - dz_range.0) / step).ceil() as usize + 1;
        let mut values = Vec::with_capacity(n_p * n_dz);
        for j in 0..n_dz {
            let dz = dz_range.0 + step * j as f64;
            for i in 0..n_p {
                let p = p_range.0 + step * i as f64;
                let ca = a.moved_to([0.0, 0.0, 0.0]);
                let cb = b.moved_to([p, 0.0, dz]);
                let m = mutual_inductance(&ca, &cb)?;
                values.push(coupling_factor(m, la, lb)?);
            }
        }
        Ok(Self {
            p_min: p_range.0,
            p_step: step,
            dz_min: dz_range.0,
            dz_step: step,
            n_p,
            n_dz,
            values,
        })
    }

    pub fn p_max(&self) -> f64 {
        self.p_min + self.p_step * (self.n_p - 1) as f64
    }

    pub fn dz_max(&self) -> f64 {
        self.dz_min + self.dz_step * (self.n_dz - 1) as f64
    }

    fn node(&self, i: isize, j: isize) -> f64 {
        // Linear extrapolation supplies ghost nodes outside the grid.
        let clamp_axis = |k: isize, n: usize| -> (usize, usize, f64) {
            if n == 1 {
                return (0, 0, 0.0);
            }
            if k < 0 {
                (0, 1, k as f64)
            } else if k as usize >= n {
                (n - 1, n - 2, (k as usize - (n - 1)) as f64)
            } else {
                (k as usize, k as usize, 0.0)
            }
        };
        let at = |i: usize, j: usize| self.values[j * self.n_p + i];
        let (i0, i1, ti) = clamp_axis(i, self.n_p);
        let (j0, j1, tj) = clamp_axis(j, self.n_dz);
        let base = at(i0, j0);
        let di = if ti != 0.0 {
            at(i0, j0) - at(i1, j0)
        } else {
            0.0
        };
        let dj = if tj != 0.0 {
            at(i0, j0) - at(i0, j1)
        } else {
            0.0
        };
        base + ti.abs() * di + tj.abs() * dj
    }

    /// Interpolated coupling factor. Errors outside the tabulated box.
    pub fn eval(&self, p: f64, dz: f64) -> Result<f64> {
        let eps = 1e-12;
        if p < self.p_min - eps
            || p > self.p_max() + eps
            || dz < self.dz_min - eps
            || dz > self.dz_max() + eps
        {
            return Err(Error::InvalidArgument(format!(
                "coupling lookup (p = {:.3} mm, dz = {:.3} mm) outside table",
                p * 1e3,
                dz * 1e3
            )));
        }
        let u = ((p - self.p_min) / self.p_step).clamp(0.0, (self.n_p - 1) as f64);
        let v = if self.n_dz == 1 {
            0.0
        } else {
            ((dz - self.dz_min) / self.dz_step).clamp(0.0, (self.n_dz - 1) as f64)
        };
        let iu = (u.floor() as isize).min(self.n_p as isize - 2).max(0);
        let iv = if self.n_dz == 1 {
            0
        } else {
            (v.floor() as isize).min(self.n_dz as isize - 2).max(0)
        };
        let tu = if self.n_p == 1 { 0.0 } else { u - iu as f64 };
        let tv = v - iv as f64;
        let wu = catmull_rom_weights(tu);
        if self.n_dz == 1 {
            return Ok((0..4)
                .map(|a| wu[a] * self.node(iu - 1 + a as isize, 0))
                .sum());
        }
        let wv = catmull_rom_weights(tv);
        let mut acc = 0.0;
        for b in 0..4 {
            let row: f64 = (0..4)
                .map(|a| wu[a] * self.node(iu - 1 + a as isize, iv - 1 + b as isize))
                .sum();
            acc += wv[b] * row;
        }
        Ok(acc)
    }
}

fn catmull_rom_weights(t: f64) -> [f64; 4] {
    let t2 = t * t;
    let t3 = t2 * t;
    [
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ]
}
