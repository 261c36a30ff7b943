//! Multi-cell network, signatures, activity, received signals and covariances.

use std::io::Write;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::rng::{self, TrialRng};

pub type Point = [f64; 2];

const SQRT3: f64 = 1.732_050_807_568_877_2;

/// System parameters. Power quantities are in dB units; the noise variance
/// used downstream is normalized by the transmit power.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// Number of cells (and base stations), B.
    pub cells: usize,
    /// Devices per cell, N.
    pub devices: usize,
    /// Active devices per cell, K.
    pub active: usize,
    /// Signature length, L.
    pub seq_len: usize,
    /// Antennas per base station, M.
    pub antennas: usize,
    pub cell_radius_m: f64,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_hz: f64,
    pub bandwidth_hz: f64,
    pub seed: u64,
    /// Devices closer than this to any base station are redrawn.
    pub min_distance_m: f64,
    /// Log-normal shadowing standard deviation in dB; off when `None`.
    pub shadowing_db: Option<f64>,
}

impl Default for SystemConfig {
    fn default() -> Self {
        Self {
            cells: 1,
            devices: 100,
            active: 10,
            seq_len: 15,
            antennas: 64,
            cell_radius_m: 250.0,
            tx_power_dbm: 23.0,
            noise_psd_dbm_hz: -169.0,
            bandwidth_hz: 10e6,
            seed: 1,
            min_distance_m: 10.0,
            shadowing_db: None,
        }
    }
}

impl SystemConfig {
    pub fn validate(&self) -> Result<()> {
        if self.active > self.devices {
            return Err(Error::Config(format!(
                "active devices K = {} exceeds N = {}",
                self.active, self.devices
            )));
        }
        if self.seq_len == 0 || self.antennas == 0 || self.cells == 0 || self.devices == 0 {
            return Err(Error::Config("B, N, L and M must all be at least 1".into()));
        }
        if !(self.cell_radius_m > 0.0) {
            return Err(Error::Config("cell radius must be positive".into()));
        }
        if !(self.min_distance_m >= 0.0 && self.min_distance_m < 0.5 * self.cell_radius_m) {
            return Err(Error::Config("minimum distance must be in [0, R/2)".into()));
        }
        if let Some(sd) = self.shadowing_db {
            if !(sd >= 0.0) {
                return Err(Error::Config("shadowing deviation must be non-negative".into()));
            }
        }
        Ok(())
    }

    /// Noise variance normalized by the transmit power (linear).
    pub fn noise_variance(&self) -> f64 {
        let noise_dbm = self.noise_psd_dbm_hz + 10.0 * self.bandwidth_hz.log10();
        10f64.powf((noise_dbm - self.tx_power_dbm) / 10.0)
    }

    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Path loss in dB at a distance given in meters.
pub fn path_loss_db(distance_m: f64) -> f64 {
    128.1 + 37.6 * (distance_m / 1000.0).log10()
}

/// Linear power gain `10^(-PL/10)`.
pub fn power_gain(distance_m: f64) -> f64 {
    10f64.powf(-path_loss_db(distance_m) / 10.0)
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkInstance {
    pub bs_positions: Vec<Point>,
    /// `device_positions[j][n]`.
    pub device_positions: Vec<Vec<Point>>,
    /// `gains[b][j][n]`: power gain from device n of cell j to BS b.
    pub gains: Vec<Vec<Vec<f64>>>,
    pub noise_var: f64,
    wrap: bool,
    radius: f64,
}

impl NetworkInstance {
    pub fn cells(&self) -> usize {
        self.bs_positions.len()
    }

    pub fn devices(&self) -> usize {
        self.device_positions.first().map_or(0, Vec::len)
    }

    pub fn gain(&self, bs: usize, cell: usize, n: usize) -> f64 {
        self.gains[bs][cell][n]
    }

    /// Gains from every device of every cell to BS `bs`, flattened as `j·N + n`.
    pub fn gains_row(&self, bs: usize) -> Vec<f64> {
        self.gains[bs].iter().flatten().copied().collect()
    }

    /// Distance from BS `bs` to `p`, under wrap-around for the 7-cell layout.
    pub fn distance(&self, bs: usize, p: Point) -> f64 {
        bs_distance(self.bs_positions[bs], p, self.wrap, self.radius)
    }

    /// Replace every gain by a custom function of `(bs, cell, n)`.
    pub fn map_gains(&mut self, mut f: impl FnMut(usize, usize, usize, f64) -> f64) {
        for (b, row) in self.gains.iter_mut().enumerate() {
            for (j, cell) in row.iter_mut().enumerate() {
                for (n, g) in cell.iter_mut().enumerate() {
                    *g = f(b, j, n, *g);
                }
            }
        }
    }
}

fn hex_centers(cells: usize, r: f64) -> Result<Vec<Point>> {
    match cells {
        1 => Ok(vec![[0.0, 0.0]]),
        7 => {
            let mut v = vec![[0.0, 0.0]];
            for k in 0..6 {
                let ang = (30.0 + 60.0 * k as f64).to_radians();
                v.push([SQRT3 * r * ang.cos(), SQRT3 * r * ang.sin()]);
            }
            Ok(v)
        }
        other => Err(Error::UnsupportedLayout(other)),
    }
}

/// Translation vectors of the 7-cell wrap-around torus (zero included).
fn wrap_shifts(r: f64) -> [Point; 7] {
    let t1 = [3.0 * r, 2.0 * SQRT3 * r];
    let t2 = [-1.5 * r, 2.5 * SQRT3 * r];
    let t3 = [t1[0] - t2[0], t1[1] - t2[1]];
    [
        [0.0, 0.0],
        t1,
        [-t1[0], -t1[1]],
        t2,
        [-t2[0], -t2[1]],
        t3,
        [-t3[0], -t3[1]],
    ]
}

fn bs_distance(bs: Point, p: Point, wrap: bool, r: f64) -> f64 {
    let direct = |s: Point| ((p[0] - bs[0] - s[0]).powi(2) + (p[1] - bs[1] - s[1]).powi(2)).sqrt();
    if wrap {
        wrap_shifts(r).iter().map(|&s| direct(s)).fold(f64::INFINITY, f64::min)
    } else {
        direct([0.0, 0.0])
    }
}

/// Flat-top hexagon with circumradius `r` centered at the origin.
fn inside_hexagon(x: f64, y: f64, r: f64) -> bool {
    y.abs() <= 0.5 * SQRT3 * r && SQRT3 * x.abs() + y.abs() <= SQRT3 * r
}

fn uniform_in_hexagon(rng: &mut TrialRng, center: Point, r: f64) -> Point {
    loop {
        let x = rng.gen_range(-r..r);
        let y = rng.gen_range(-0.5 * SQRT3 * r..0.5 * SQRT3 * r);
        if inside_hexagon(x, y, r) {
            return [center[0] + x, center[1] + y];
        }
    }
}

/// Build the network from `cfg.seed`.
pub fn build_network(cfg: &SystemConfig) -> Result<NetworkInstance> {
    build_network_with(cfg, &mut rng::stream(cfg.seed, &[0x6e65_7477]))
}

/// Hexagonal layout, uniform device drop, path-loss gains.
pub fn build_network_with(cfg: &SystemConfig, rng: &mut TrialRng) -> Result<NetworkInstance> {
    cfg.validate()?;
    let r = cfg.cell_radius_m;
    let bs_positions = hex_centers(cfg.cells, r)?;
    let wrap = cfg.cells == 7;
    let mut device_positions = Vec::with_capacity(cfg.cells);
    for center in &bs_positions {
        let mut cell = Vec::with_capacity(cfg.devices);
        while cell.len() < cfg.devices {
            let p = uniform_in_hexagon(rng, *center, r);
            let too_close = bs_positions
                .iter()
                .any(|&bs| bs_distance(bs, p, wrap, r) < cfg.min_distance_m);
            if !too_close {
                cell.push(p);
            }
        }
        device_positions.push(cell);
    }
    let mut gains = vec![vec![vec![0.0; cfg.devices]; cfg.cells]; cfg.cells];
    for (b, &bs) in bs_positions.iter().enumerate() {
        for (j, cell) in device_positions.iter().enumerate() {
            for (n, &p) in cell.iter().enumerate() {
                let mut g = power_gain(bs_distance(bs, p, wrap, r));
                if let Some(sd) = cfg.shadowing_db {
                    let z: f64 = rng.sample(StandardNormal);
                    g *= 10f64.powf(sd * z / 10.0);
                }
                gains[b][j][n] = g;
            }
        }
    }
    Ok(NetworkInstance {
        bs_positions,
        device_positions,
        gains,
        noise_var: cfg.noise_variance(),
        wrap,
        radius: r,
    })
}

/// Binary activity per cell with its support sets.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ActivityPattern {
    pub flags: Vec<Vec<bool>>,
}

impl ActivityPattern {
    pub fn from_flags(flags: Vec<Vec<bool>>) -> Self {
        Self { flags }
    }

    pub fn cells(&self) -> usize {
        self.flags.len()
    }

    pub fn devices(&self) -> usize {
        self.flags.first().map_or(0, Vec::len)
    }

    pub fn active_set(&self, cell: usize) -> Vec<usize> {
        (0..self.devices()).filter(|&n| self.flags[cell][n]).collect()
    }

    pub fn inactive_set(&self, cell: usize) -> Vec<usize> {
        (0..self.devices()).filter(|&n| !self.flags[cell][n]).collect()
    }

    /// Indicators as 0/1 reals, flattened `j·N + n`.
    pub fn indicators(&self) -> Vec<f64> {
        self.flags.iter().flatten().map(|&a| if a { 1.0 } else { 0.0 }).collect()
    }

    pub fn flat(&self) -> Vec<bool> {
        self.flags.iter().flatten().copied().collect()
    }
}

/// Uniformly random K-subset per cell.
pub fn sample_activity(cfg: &SystemConfig, rng: &mut TrialRng) -> ActivityPattern {
    let flags = (0..cfg.cells)
        .map(|_| {
            let mut f = vec![false; cfg.devices];
            for n in rand::seq::index::sample(rng, cfg.devices, cfg.active) {
                f[n] = true;
            }
            f
        })
        .collect();
    ActivityPattern { flags }
}

/// Per-cell signature matrices, L×N with CN(0,1) entries.
#[derive(Clone, Debug, PartialEq)]
pub struct SignatureSet {
    pub mats: Vec<CMat>,
}

impl SignatureSet {
    pub fn cells(&self) -> usize {
        self.mats.len()
    }

    pub fn seq_len(&self) -> usize {
        self.mats[0].nrows()
    }

    pub fn devices(&self) -> usize {
        self.mats[0].ncols()
    }

    /// Signature of device `n` in cell `cell` as a contiguous slice.
    pub fn column(&self, cell: usize, n: usize) -> &[Complex64] {
        let l = self.seq_len();
        &self.mats[cell].as_slice()[n * l..(n + 1) * l]
    }

    /// `[S_1, ..., S_B]`, L×BN.
    pub fn stacked(&self) -> CMat {
        let (l, n) = (self.seq_len(), self.devices());
        let mut out = CMat::zeros(l, n * self.cells());
        for (j, s) in self.mats.iter().enumerate() {
            out.columns_mut(j * n, n).copy_from(s);
        }
        out
    }
}

pub fn generate_signatures(cfg: &SystemConfig, rng: &mut TrialRng) -> SignatureSet {
    let mats = (0..cfg.cells)
        .map(|_| DMatrix::from_fn(cfg.seq_len, cfg.devices, |_, _| rng::complex_normal(rng, 1.0)))
        .collect();
    SignatureSet { mats }
}

/// Received pilots `Y_b`, one L×M matrix per BS.
pub fn simulate_received(
    net: &NetworkInstance,
    sigs: &SignatureSet,
    act: &ActivityPattern,
    cfg: &SystemConfig,
    rng: &mut TrialRng,
) -> Result<Vec<CMat>> {
    let (b_count, l, m) = (net.cells(), sigs.seq_len(), cfg.antennas);
    if sigs.cells() != b_count || act.cells() != b_count || sigs.devices() != act.devices() {
        return Err(Error::Shape("network, signatures and activity disagree".into()));
    }
    let mut out = Vec::with_capacity(b_count);
    let mut h = vec![Complex64::new(0.0, 0.0); m];
    for b in 0..b_count {
        let mut y = CMat::from_fn(l, m, |_, _| rng::complex_normal(rng, net.noise_var));
        for j in 0..b_count {
            for n in act.active_set(j) {
                let amp = net.gain(b, j, n).sqrt();
                h.iter_mut().for_each(|v| *v = rng::complex_normal(rng, 1.0));
                let s = sigs.column(j, n);
                for (col, &hm) in h.iter().enumerate() {
                    let w = hm * amp;
                    for (row, &si) in s.iter().enumerate() {
                        y[(row, col)] += si * w;
                    }
                }
            }
        }
        out.push(y);
    }
    Ok(out)
}

/// `(1/M) Y Y^H`.
pub fn sample_covariance(y: &CMat) -> CMat {
    let m = y.ncols().max(1) as f64;
    let mut s = (y * y.adjoint()).unscale(m);
    linalg::hermitize(&mut s);
    s
}

/// Known-fading model covariance at BS `bs` with per-device weights
/// (flattened `j·N + n`).
pub fn model_covariance(
    net: &NetworkInstance,
    sigs: &SignatureSet,
    weights: &[f64],
    bs: usize,
    noise_var: f64,
) -> Result<CMat> {
    let n = sigs.devices();
    if weights.len() != n * sigs.cells() {
        return Err(Error::Shape(format!("expected {} weights", n * sigs.cells())));
    }
    let gammas: Vec<f64> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| w * net.gain(bs, i / n, i % n))
        .collect();
    if let Some((index, &value)) = weights.iter().enumerate().find(|(_, w)| !(**w >= 0.0)) {
        return Err(Error::NegativeWeight { index, value });
    }
    model_covariance_gamma(sigs, &gammas, noise_var)
}

/// Unknown-fading model covariance: `Σ_j S_j diag(γ_j) S_j^H + σ² I`.
pub fn model_covariance_gamma(sigs: &SignatureSet, gammas: &[f64], noise_var: f64) -> Result<CMat> {
    let n = sigs.devices();
    if gammas.len() != n * sigs.cells() {
        return Err(Error::Shape(format!("expected {} gains", n * sigs.cells())));
    }
    let mut sigma = linalg::identity_scaled(sigs.seq_len(), noise_var);
    for (i, &g) in gammas.iter().enumerate() {
        if !(g >= 0.0) {
            return Err(Error::NegativeWeight { index: i, value: g });
        }
        if g > 0.0 {
            linalg::hermitian_rank1_add(&mut sigma, sigs.column(i / n, i % n), g);
        }
    }
    Ok(sigma)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Sample,
    Model,
    Reconstructed,
}

#[derive(Clone, Debug)]
pub struct CovarianceSet {
    pub kind: CovarianceKind,
    pub noise_var: f64,
    pub mats: Vec<CMat>,
}

impl CovarianceSet {
    pub fn sample(received: &[CMat], noise_var: f64) -> Self {
        Self {
            kind: CovarianceKind::Sample,
            noise_var,
            mats: received.iter().map(sample_covariance).collect(),
        }
    }

    /// Model covariances at every BS for the given activity.
    pub fn model(net: &NetworkInstance, sigs: &SignatureSet, act: &ActivityPattern) -> Result<Self> {
        let w = act.indicators();
        let mats = (0..net.cells())
            .map(|b| model_covariance(net, sigs, &w, b, net.noise_var))
            .collect::<Result<_>>()?;
        Ok(Self { kind: CovarianceKind::Model, noise_var: net.noise_var, mats })
    }
}

/// Writes `kind,index,a,b,x,y,value` rows for BS positions, device positions
/// and gains.
pub fn write_network_csv<W: Write>(net: &NetworkInstance, mut w: W) -> Result<()> {
    writeln!(w, "kind,bs,cell,device,x_m,y_m,value")?;
    for (b, p) in net.bs_positions.iter().enumerate() {
        writeln!(w, "bs,{b},,,{},{},", p[0], p[1])?;
    }
    for (j, cell) in net.device_positions.iter().enumerate() {
        for (n, p) in cell.iter().enumerate() {
            writeln!(w, "device,,{j},{n},{},{},", p[0], p[1])?;
        }
    }
    for (b, row) in net.gains.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            for (n, g) in cell.iter().enumerate() {
                writeln!(w, "gain,{b},{j},{n},,,{g:e}")?;
            }
        }
    }
    writeln!(w, "noise_var,,,,,,{:e}", net.noise_var)?;
    Ok(())
}

/// One CSV row per signature row: `cell,row,re_0,im_0,...`.
pub fn write_signatures_csv<W: Write>(sigs: &SignatureSet, mut w: W) -> Result<()> {
    let n = sigs.devices();
    let mut header = String::from("cell,row");
    for k in 0..n {
        header.push_str(&format!(",re_{k},im_{k}"));
    }
    writeln!(w, "{header}")?;
    for (j, s) in sigs.mats.iter().enumerate() {
        for r in 0..s.nrows() {
            let mut line = format!("{j},{r}");
            for c in 0..n {
                let v = s[(r, c)];
                line.push_str(&format!(",{:e},{:e}", v.re, v.im));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

/// Hermitian matrices as `bs,row,re_0,im_0,...`.
pub fn write_covariances_csv<W: Write>(set: &CovarianceSet, mut w: W) -> Result<()> {
    let l = set.mats.first().map_or(0, |m| m.nrows());
    let mut header = String::from("bs,row");
    for k in 0..l {
        header.push_str(&format!(",re_{k},im_{k}"));
    }
    writeln!(w, "{header}")?;
    for (b, m) in set.mats.iter().enumerate() {
        for r in 0..l {
            let mut line = format!("{b},{r}");
            for c in 0..l {
                line.push_str(&format!(",{:e},{:e}", m[(r, c)].re, m[(r, c)].im));
            }
            writeln!(w, "{line}")?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(cells: usize) -> SystemConfig {
        SystemConfig { cells, devices: 20, active: 3, seq_len: 4, antennas: 8, ..Default::default() }
    }

    #[test]
    fn path_loss_at_100m() {
        assert!((path_loss_db(100.0) - 90.5).abs() < 1e-12);
        assert!((power_gain(100.0) / 10f64.powf(-9.05) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn noise_variance_normalized_by_tx_power() {
        let v = SystemConfig::default().noise_variance();
        assert!((v / 10f64.powf(-12.2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_cell_layout() {
        let net = build_network(&cfg(1)).unwrap();
        assert_eq!(net.bs_positions, vec![[0.0, 0.0]]);
        assert_eq!(net.gains.len(), 1);
        assert_eq!(net.gains[0].len(), 1);
        assert_eq!(net.gains[0][0].len(), 20);
        for p in &net.device_positions[0] {
            let d = net.distance(0, *p);
            assert!(d <= 250.0 + 1e-9 && d >= 10.0);
        }
        assert!(net.gains[0][0].iter().all(|&g| g > 0.0));
    }

    #[test]
    fn unsupported_layouts_rejected() {
        for b in [2, 3, 19] {
            assert!(matches!(build_network(&cfg(b)), Err(Error::UnsupportedLayout(_))));
        }
    }

    #[test]
    fn wraparound_tiles_the_plane() {
        // every point near the cluster lies within one circumradius of some BS image
        let net = build_network(&cfg(7)).unwrap();
        let mut r = rng::stream(3, &[]);
        for _ in 0..2000 {
            let p = [r.gen_range(-900.0..900.0), r.gen_range(-900.0..900.0)];
            let dmin = (0..7).map(|b| net.distance(b, p)).fold(f64::INFINITY, f64::min);
            assert!(dmin <= 250.0 + 1e-9, "point {p:?} at {dmin}");
        }
    }

    #[test]
    fn wraparound_never_exceeds_direct_distance() {
        let net = build_network(&cfg(7)).unwrap();
        for b in 0..7 {
            for cell in &net.device_positions {
                for &p in cell {
                    let bs = net.bs_positions[b];
                    let direct = ((p[0] - bs[0]).powi(2) + (p[1] - bs[1]).powi(2)).sqrt();
                    assert!(net.distance(b, p) <= direct + 1e-9);
                }
            }
        }
    }

    #[test]
    fn devices_stay_in_their_own_cell() {
        let net = build_network(&cfg(7)).unwrap();
        for (j, cell) in net.device_positions.iter().enumerate() {
            for &p in cell {
                let own = net.distance(j, p);
                for b in 0..7 {
                    assert!(own <= net.distance(b, p) + 1e-9);
                }
            }
        }
    }

    #[test]
    fn activity_extremes() {
        let mut c = cfg(2);
        let mut r = rng::stream(1, &[]);
        c.active = 0;
        assert!(sample_activity(&c, &mut r).flat().iter().all(|&a| !a));
        c.active = c.devices;
        assert!(sample_activity(&c, &mut r).flat().iter().all(|&a| a));
        c.active = 3;
        let a = sample_activity(&c, &mut r);
        for j in 0..2 {
            assert_eq!(a.active_set(j).len(), 3);
            assert_eq!(a.inactive_set(j).len(), 17);
        }
    }

    #[test]
    fn activity_frequencies_are_uniform() {
        let c = SystemConfig { devices: 10, active: 3, ..cfg(1) };
        let mut r = rng::stream(11, &[]);
        let mut counts = [0usize; 10];
        let draws = 10_000;
        for _ in 0..draws {
            for n in sample_activity(&c, &mut r).active_set(0) {
                counts[n] += 1;
            }
        }
        for &k in &counts {
            assert!((k as f64 / draws as f64 - 0.3).abs() < 0.02);
        }
    }

    #[test]
    fn signature_moments() {
        let c = SystemConfig { seq_len: 100, devices: 1000, ..cfg(1) };
        let sigs = generate_signatures(&c, &mut rng::stream(5, &[]));
        let s = &sigs.mats[0];
        let count = s.len() as f64;
        let mean = s.iter().sum::<Complex64>() / count;
        let power = s.iter().map(|v| v.norm_sqr()).sum::<f64>() / count;
        assert!(mean.norm() < 0.02);
        assert!((power - 1.0).abs() < 0.02);
        let re_var = s.iter().map(|v| v.re * v.re).sum::<f64>() / count;
        assert!((re_var - 0.5).abs() < 0.025);
        let again = generate_signatures(&c, &mut rng::stream(5, &[]));
        assert_eq!(sigs, again);
    }

    #[test]
    fn seeded_instances_are_identical() {
        let c = cfg(7);
        assert_eq!(build_network(&c).unwrap(), build_network(&c).unwrap());
        let a1 = sample_activity(&c, &mut rng::stream(2, &[1]));
        let a2 = sample_activity(&c, &mut rng::stream(2, &[1]));
        assert_eq!(a1, a2);
    }

    #[test]
    fn silent_network_receives_nothing() {
        let c = SystemConfig { active: 0, ..cfg(1) };
        let mut net = build_network(&c).unwrap();
        net.noise_var = 0.0;
        let sigs = generate_signatures(&c, &mut rng::stream(1, &[]));
        let act = sample_activity(&c, &mut rng::stream(1, &[]));
        let y = simulate_received(&net, &sigs, &act, &c, &mut rng::stream(1, &[2])).unwrap();
        assert!(y[0].iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn single_device_gives_rank_one_signal() {
        let c = SystemConfig { antennas: 1, ..cfg(1) };
        let mut net = build_network(&c).unwrap();
        net.noise_var = 0.0;
        let sigs = generate_signatures(&c, &mut rng::stream(1, &[]));
        let mut flags = vec![vec![false; c.devices]];
        flags[0][4] = true;
        let act = ActivityPattern::from_flags(flags);
        let y = simulate_received(&net, &sigs, &act, &c, &mut rng::stream(1, &[2])).unwrap();
        let s = sigs.column(0, 4);
        let ratio = y[0][(0, 0)] / s[0];
        for i in 0..c.seq_len {
            assert!((y[0][(i, 0)] - s[i] * ratio).norm() < 1e-12 * y[0].norm());
        }
    }

    #[test]
    fn sample_covariance_by_hand() {
        let y = CMat::from_column_slice(2, 1, &[Complex64::new(1.0, 0.0), Complex64::new(0.0, 1.0)]);
        let s = sample_covariance(&y);
        let want = CMat::from_row_slice(
            2,
            2,
            &[
                Complex64::new(1.0, 0.0),
                Complex64::new(0.0, -1.0),
                Complex64::new(0.0, 1.0),
                Complex64::new(1.0, 0.0),
            ],
        );
        assert_eq!(s, want);
        assert!(sample_covariance(&CMat::zeros(3, 5)).iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn random_sample_covariance_is_hermitian_psd() {
        let mut r = rng::stream(9, &[]);
        for _ in 0..20 {
            let y = CMat::from_fn(6, 4, |_, _| rng::complex_normal(&mut r, 1.0));
            let s = sample_covariance(&y);
            assert_eq!(linalg::relative_asymmetry(&s), 0.0);
            assert!(linalg::min_eigenvalue(&s) >= -1e-12);
        }
    }

    #[test]
    fn model_covariance_special_cases() {
        let c = cfg(1);
        let mut net = build_network(&c).unwrap();
        let sigs = generate_signatures(&c, &mut rng::stream(1, &[]));
        let zeros = vec![0.0; c.devices];
        let m = model_covariance(&net, &sigs, &zeros, 0, 0.5).unwrap();
        assert_eq!(m, linalg::identity_scaled(c.seq_len, 0.5));

        net.map_gains(|_, _, _, _| 1.0);
        let mut w = zeros.clone();
        w[2] = 1.0;
        let m = model_covariance(&net, &sigs, &w, 0, 0.5).unwrap();
        let s = nalgebra::DVector::from_column_slice(sigs.column(0, 2));
        let want = &s * s.adjoint() + linalg::identity_scaled(c.seq_len, 0.5);
        assert!((m - want).norm() < 1e-14);

        w[3] = -0.1;
        assert!(matches!(
            model_covariance(&net, &sigs, &w, 0, 0.5),
            Err(Error::NegativeWeight { index: 3, .. })
        ));
    }

    #[test]
    fn toml_config_round_trip() {
        let c = SystemConfig::from_toml_str("cells = 7\ndevices = 50\nactive = 5\nseq_len = 12\n").unwrap();
        assert_eq!(c.cells, 7);
        assert_eq!(c.cell_radius_m, 250.0);
        assert!(SystemConfig::from_toml_str("devices = 5\nactive = 6\n").is_err());
        assert!(SystemConfig::from_toml_str("bogus = 1\n").is_err());
    }
}
