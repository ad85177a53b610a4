//! User-level influence statistics.
//!
//! Profiles hold the retweet count `RT`, followers `fol`, messages `twt`, topical
//! diversity `H1` and content interestingness `beta = RT / (twt * fol)` of each user.
//! [`regress_profiles`] regresses raw `RT` on the z-scored features; the rest of the
//! module bins users and reports Spearman correlations and heatmap cells.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diversity::UserDiversity;
use crate::ingest::MessageRecord;
use crate::stats;
use crate::tsv::{self, Table, TsvError};

#[derive(Debug, Error, PartialEq)]
pub enum InfluenceError {
    #[error("column `{0}` has zero variance")]
    ZeroVariance(String),
    #[error("column `{column}` needs at least {needed} values, got {got}")]
    TooFew { column: String, needed: usize, got: usize },
    #[error("design matrix is singular: `{0}` is collinear with earlier columns")]
    Singular(String),
    #[error("paired columns differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("unknown profile field `{0}`")]
    UnknownField(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct UserProfile {
    pub user_id: String,
    /// Times reposted during observation, counting every reposter in a cascade.
    pub rt: u64,
    pub fol: u64,
    pub twt: u64,
    pub h1: Option<f64>,
    pub beta: Option<f64>,
}

/// `RT / (twt * fol)`, the per-view repost propensity up to a global constant.
pub fn interestingness(rt: u64, twt: u64, fol: u64) -> Option<f64> {
    (twt > 0 && fol > 0).then(|| rt as f64 / (twt as f64 * fol as f64))
}

/// Profiles of every user seen in `observation` (as author or repost source) or in
/// `followers`, sorted by user id.
pub fn build_profiles(
    observation: &[MessageRecord],
    followers: &HashMap<String, u64>,
    diversity: &BTreeMap<String, UserDiversity>,
) -> Vec<UserProfile> {
    let mut rt: BTreeMap<&str, u64> = BTreeMap::new();
    let mut twt: BTreeMap<&str, u64> = BTreeMap::new();
    for rec in observation {
        *twt.entry(&rec.author_id).or_insert(0) += 1;
        rt.entry(&rec.author_id).or_insert(0);
        if let Some(src) = &rec.repost_of {
            *rt.entry(src).or_insert(0) += 1;
        }
    }
    for user in followers.keys() {
        rt.entry(user).or_insert(0);
    }
    rt.into_iter()
        .map(|(user, rt)| {
            let twt = twt.get(user).copied().unwrap_or(0);
            let fol = followers.get(user).copied().unwrap_or(0);
            UserProfile {
                user_id: user.to_string(),
                rt,
                fol,
                twt,
                h1: diversity.get(user).and_then(|d| d.h1),
                beta: interestingness(rt, twt, fol),
            }
        })
        .collect()
}

pub fn write_profiles(profiles: &[UserProfile], path: &Path) -> std::io::Result<()> {
    let mut out = String::from("user_id\tRT\tfol\ttwt\tH1\tbeta\n");
    for p in profiles {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.user_id,
            p.rt,
            p.fol,
            p.twt,
            tsv::fixed(p.h1, 4),
            tsv::sci(p.beta)
        );
    }
    tsv::write_file(path, &out)
}

pub fn read_profiles(path: &Path) -> Result<Vec<UserProfile>, TsvError> {
    let table = Table::read(path)?;
    let cols = ["user_id", "RT", "fol", "twt", "H1", "beta"]
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>, _>>()?;
    table
        .rows
        .iter()
        .map(|row| {
            Ok(UserProfile {
                user_id: table.cell(row, cols[0])?.to_string(),
                rt: table.parse(row, cols[1])?,
                fol: table.parse(row, cols[2])?,
                twt: table.parse(row, cols[3])?,
                h1: table.parse_opt(row, cols[4])?,
                beta: table.parse_opt(row, cols[5])?,
            })
        })
        .collect()
}

/// Reads a `user_id \t followers` table.
pub fn read_followers(path: &Path) -> Result<HashMap<String, u64>, TsvError> {
    let table = Table::read(path)?;
    let (c_user, c_fol) = (table.column("user_id")?, table.column("followers")?);
    table
        .rows
        .iter()
        .map(|row| Ok((table.cell(row, c_user)?.to_string(), table.parse(row, c_fol)?)))
        .collect()
}

pub fn write_followers(followers: &BTreeMap<String, u64>, path: &Path) -> std::io::Result<()> {
    let mut out = String::from("user_id\tfollowers\n");
    for (u, f) in followers {
        let _ = writeln!(out, "{u}\t{f}");
    }
    tsv::write_file(path, &out)
}

/// Standardizes with the sample (N-1) standard deviation.
pub fn zscore(values: &[f64], column: &str) -> Result<Vec<f64>, InfluenceError> {
    if values.len() < 2 {
        return Err(InfluenceError::TooFew {
            column: column.to_string(),
            needed: 2,
            got: values.len(),
        });
    }
    let m = stats::mean(values);
    let sd = stats::sample_sd(values);
    if !(sd > 0.0) || sd < 1e-12 * m.abs() {
        return Err(InfluenceError::ZeroVariance(column.to_string()));
    }
    Ok(values.iter().map(|v| (v - m) / sd).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub se: f64,
    pub t: f64,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub intercept: Coefficient,
    pub coefficients: Vec<Coefficient>,
    pub n: usize,
    pub residual_se: f64,
    pub r_squared: f64,
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn write_tsv(&self, path: &Path, header_comments: &[String]) -> std::io::Result<()> {
        let mut out = String::new();
        for c in header_comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("variable\tcoef\tse\tt\tp\n");
        for c in std::iter::once(&self.intercept).chain(&self.coefficients) {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                c.name,
                tsv::fixed(Some(c.estimate), 1),
                tsv::fixed(Some(c.se), 1),
                tsv::fixed(Some(c.t), 2),
                format_p(c.p)
            );
        }
        tsv::write_file(path, &out)
    }
}

fn format_p(p: f64) -> String {
    format!("{p:.3e}")
}

/// Least squares of `response` on the named columns plus an intercept, with
/// classical standard errors and two-sided t-test p-values.
pub fn ols_fit(design: &[(String, Vec<f64>)], response: &[f64]) -> Result<RegressionResult, InfluenceError> {
    let n = response.len();
    let k = design.len();
    for (name, col) in design {
        if col.len() != n {
            return Err(InfluenceError::LengthMismatch(col.len(), n));
        }
        let _ = name;
    }
    if n <= k + 1 {
        return Err(InfluenceError::TooFew {
            column: "response".into(),
            needed: k + 2,
            got: n,
        });
    }
    let columns: Vec<Vec<f64>> = design.iter().map(|(_, c)| c.clone()).collect();
    let fit = stats::least_squares(&columns, response)
        .map_err(|stats::Collinear(i)| InfluenceError::Singular(design[i].0.clone()))?;
    let df = (n - k - 1) as f64;
    let rss: f64 = fit.residuals.iter().map(|r| r * r).sum();
    let sigma2 = rss / df;
    let my = stats::mean(response);
    let tss: f64 = response.iter().map(|y| (y - my) * (y - my)).sum();
    let coef = |i: usize, name: &str| {
        let se = (sigma2 * fit.xtx_inv[i][i]).sqrt();
        let t = fit.coefs[i] / se;
        Coefficient {
            name: name.to_string(),
            estimate: fit.coefs[i],
            se,
            t,
            p: if se > 0.0 { stats::t_two_sided_p(t, df) } else { 0.0 },
        }
    };
    Ok(RegressionResult {
        intercept: coef(0, "(intercept)"),
        coefficients: design.iter().enumerate().map(|(i, (name, _))| coef(i + 1, name)).collect(),
        n,
        residual_se: sigma2.sqrt(),
        r_squared: if tss > 0.0 { 1.0 - rss / tss } else { 0.0 },
        residuals: fit.residuals,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegressionOptions {
    pub sample_frac: f64,
    pub seed: u64,
}

impl Default for RegressionOptions {
    fn default() -> Self {
        Self {
            sample_frac: 1.0,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SampleReport {
    pub total: usize,
    pub sampled: usize,
    /// Sampled users dropped for a missing beta or H1.
    pub excluded: usize,
}

/// Regresses RT on z-scored fol, twt, beta and H1.
pub fn regress_profiles(
    profiles: &[UserProfile],
    options: RegressionOptions,
) -> Result<(RegressionResult, SampleReport), InfluenceError> {
    let frac = options.sample_frac.clamp(0.0, 1.0);
    let sampled: Vec<&UserProfile> = if frac >= 1.0 {
        profiles.iter().collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
        let amount = (frac * profiles.len() as f64).round() as usize;
        let mut idx = rand::seq::index::sample(&mut rng, profiles.len(), amount).into_vec();
        idx.sort_unstable();
        idx.into_iter().map(|i| &profiles[i]).collect()
    };
    let complete: Vec<(&UserProfile, f64, f64)> = sampled
        .iter()
        .filter_map(|p| Some((*p, p.beta?, p.h1?)))
        .collect();
    let report = SampleReport {
        total: profiles.len(),
        sampled: sampled.len(),
        excluded: sampled.len() - complete.len(),
    };
    let raw: [(&str, Vec<f64>); 4] = [
        ("fol", complete.iter().map(|(p, _, _)| p.fol as f64).collect()),
        ("twt", complete.iter().map(|(p, _, _)| p.twt as f64).collect()),
        ("beta", complete.iter().map(|(_, b, _)| *b).collect()),
        ("H1", complete.iter().map(|(_, _, h)| *h).collect()),
    ];
    let design = raw
        .iter()
        .map(|(name, col)| Ok((name.to_string(), zscore(col, name)?)))
        .collect::<Result<Vec<_>, InfluenceError>>()?;
    let response: Vec<f64> = complete.iter().map(|(p, _, _)| p.rt as f64).collect();
    Ok((ols_fit(&design, &response)?, report))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub rho: f64,
    pub p: f64,
    pub n: usize,
}

/// Spearman rank correlation with mid-ranks for ties; p from the t approximation.
pub fn spearman(x: &[f64], y: &[f64]) -> Result<Correlation, InfluenceError> {
    if x.len() != y.len() {
        return Err(InfluenceError::LengthMismatch(x.len(), y.len()));
    }
    let n = x.len();
    if n < 3 {
        return Err(InfluenceError::TooFew {
            column: "pairs".into(),
            needed: 3,
            got: n,
        });
    }
    let (rx, ry) = (stats::midranks(x), stats::midranks(y));
    let mut rho = stats::pearson(&rx, &ry).ok_or_else(|| InfluenceError::ZeroVariance("ranks".into()))?;
    // Identical or mirrored rank vectors are exactly +-1; the float sums can miss by an ulp.
    if rx == ry {
        rho = 1.0;
    } else if rx.iter().zip(&ry).all(|(a, b)| a + b == (n + 1) as f64) {
        rho = -1.0;
    }
    let p = if rho.abs() >= 1.0 {
        0.0
    } else {
        let df = (n - 2) as f64;
        stats::t_two_sided_p(rho * (df / (1.0 - rho * rho)).sqrt(), df)
    };
    Ok(Correlation { rho, p, n })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ProfileField {
    #[serde(rename = "RT")]
    Rt,
    #[serde(rename = "fol")]
    Fol,
    #[serde(rename = "twt")]
    Twt,
    H1,
    #[serde(rename = "beta")]
    Beta,
}

impl ProfileField {
    pub fn value(self, p: &UserProfile) -> Option<f64> {
        match self {
            Self::Rt => Some(p.rt as f64),
            Self::Fol => Some(p.fol as f64),
            Self::Twt => Some(p.twt as f64),
            Self::H1 => p.h1,
            Self::Beta => p.beta,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Rt => "RT",
            Self::Fol => "fol",
            Self::Twt => "twt",
            Self::H1 => "H1",
            Self::Beta => "beta",
        }
    }
}

impl std::str::FromStr for ProfileField {
    type Err = InfluenceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "RT" | "rt" => Ok(Self::Rt),
            "fol" => Ok(Self::Fol),
            "twt" => Ok(Self::Twt),
            "H1" | "h1" => Ok(Self::H1),
            "beta" => Ok(Self::Beta),
            other => Err(InfluenceError::UnknownField(other.to_string())),
        }
    }
}

/// Bin edges as `[lo, hi)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Binning {
    /// Base-10 decades `[10^d, 10^(d+1))`, plus a `[0, 10^dmin)` bin for zeros.
    Log10,
    /// One bin holding everything.
    Single,
}

fn decade(v: f64) -> i32 {
    let mut d = v.log10().floor() as i32;
    while 10f64.powi(d + 1) <= v {
        d += 1;
    }
    while 10f64.powi(d) > v {
        d -= 1;
    }
    d
}

/// Bins spanning `values` and the bin index of every value (`None` for negatives or
/// non-finite values).
fn assign_bins(values: &[f64], binning: Binning) -> (Vec<Bin>, Vec<Option<usize>>) {
    let usable = |v: f64| v.is_finite() && v >= 0.0;
    if binning == Binning::Single {
        let hi = values.iter().copied().filter(|v| usable(*v)).fold(0.0, f64::max);
        let idx = values.iter().map(|v| usable(*v).then_some(0)).collect();
        return (vec![Bin { lo: 0.0, hi: f64::INFINITY.min(hi.max(0.0) + f64::INFINITY) }], idx);
    }
    let decades: Vec<i32> = values.iter().filter(|v| usable(**v) && **v > 0.0).map(|v| decade(*v)).collect();
    let has_zero = values.contains(&0.0);
    let (dmin, dmax) = match (decades.iter().min(), decades.iter().max()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => (0, -1),
    };
    let mut bins = Vec::new();
    let offset = usize::from(has_zero);
    if has_zero {
        bins.push(Bin {
            lo: 0.0,
            hi: if dmax >= dmin { 10f64.powi(dmin) } else { 1.0 },
        });
    }
    for d in dmin..=dmax {
        bins.push(Bin {
            lo: 10f64.powi(d),
            hi: 10f64.powi(d + 1),
        });
    }
    let idx = values
        .iter()
        .map(|&v| {
            if !usable(v) {
                None
            } else if v == 0.0 {
                Some(0)
            } else {
                Some(offset + (decade(v) - dmin) as usize)
            }
        })
        .collect();
    (bins, idx)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationBin {
    pub bin: Bin,
    pub n: usize,
    /// `None` when the bin is too small or degenerate.
    pub correlation: Option<Correlation>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries {
    pub bin_by: ProfileField,
    pub x: ProfileField,
    pub y: ProfileField,
    pub bins: Vec<CorrelationBin>,
}

impl CorrelationSeries {
    pub fn write_tsv(&self, path: &Path) -> std::io::Result<()> {
        let mut out = format!(
            "# bin_by={} x={} y={}\nbin_lo\tbin_hi\tn\trho\tp\n",
            self.bin_by.name(),
            self.x.name(),
            self.y.name()
        );
        for b in &self.bins {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}",
                fmt_edge(b.bin.lo),
                fmt_edge(b.bin.hi),
                b.n,
                tsv::fixed(b.correlation.map(|c| c.rho), 4),
                b.correlation.map_or("NA".to_string(), |c| format_p(c.p))
            );
        }
        tsv::write_file(path, &out)
    }
}

fn fmt_edge(v: f64) -> String {
    if v.is_infinite() {
        "inf".into()
    } else {
        format!("{v}")
    }
}

pub const MIN_BIN_USERS: usize = 30;

/// Spearman correlation of `x` and `y` within bins of `bin_by`. Users missing `x` or
/// `y` are left out; bins with fewer than `min_users` users report no correlation.
pub fn binned_correlation(
    profiles: &[UserProfile],
    bin_by: ProfileField,
    x: ProfileField,
    y: ProfileField,
    binning: Binning,
    min_users: usize,
) -> CorrelationSeries {
    let rows: Vec<(f64, f64, f64)> = profiles
        .iter()
        .filter_map(|p| Some((bin_by.value(p)?, x.value(p)?, y.value(p)?)))
        .collect();
    let keys: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (bins, idx) = assign_bins(&keys, binning);
    let mut members: Vec<(Vec<f64>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); bins.len()];
    for (row, b) in rows.iter().zip(idx) {
        if let Some(b) = b {
            members[b].0.push(row.1);
            members[b].1.push(row.2);
        }
    }
    let bins = bins
        .into_iter()
        .zip(members)
        .map(|(bin, (xs, ys))| CorrelationBin {
            bin,
            n: xs.len(),
            correlation: if xs.len() >= min_users.max(3) { spearman(&xs, &ys).ok() } else { None },
        })
        .collect();
    CorrelationSeries { bin_by, x, y, bins }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeatCell {
    pub count: usize,
    pub mean_twt: Option<f64>,
    pub mean_rt: Option<f64>,
    pub mean_beta: Option<f64>,
}

/// Users binned linearly by H1 (columns) and by decades of followers (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapGrid {
    pub h1_bins: Vec<Bin>,
    pub fol_bins: Vec<Bin>,
    /// Row-major: `cells[fol_bin][h1_bin]`.
    pub cells: Vec<Vec<HeatCell>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatStat {
    Count,
    MeanTwt,
    MeanRt,
    MeanBeta,
}

impl HeatStat {
    pub const ALL: [HeatStat; 4] = [Self::Count, Self::MeanTwt, Self::MeanRt, Self::MeanBeta];

    pub fn file_name(self) -> &'static str {
        match self {
            Self::Count => "heatmap_count.tsv",
            Self::MeanTwt => "heatmap_twt.tsv",
            Self::MeanRt => "heatmap_rt.tsv",
            Self::MeanBeta => "heatmap_beta.tsv",
        }
    }
}

pub fn heatmap_grid(profiles: &[UserProfile], n_h1_bins: usize) -> HeatmapGrid {
    let users: Vec<(&UserProfile, f64)> = profiles.iter().filter_map(|p| Some((p, p.h1?))).collect();
    let n_h1 = n_h1_bins.max(1);
    let h1_max = users.iter().map(|u| u.1).fold(0.0, f64::max);
    let width = if h1_max > 0.0 { h1_max / n_h1 as f64 } else { 1.0 / n_h1 as f64 };
    let h1_bins: Vec<Bin> = (0..n_h1)
        .map(|i| Bin {
            lo: i as f64 * width,
            hi: (i + 1) as f64 * width,
        })
        .collect();
    let fols: Vec<f64> = users.iter().map(|u| u.0.fol as f64).collect();
    let (fol_bins, fol_idx) = assign_bins(&fols, Binning::Log10);

    let mut sums = vec![vec![(0usize, 0.0, 0.0, 0.0, 0usize); n_h1]; fol_bins.len()];
    for ((p, h1), fb) in users.iter().zip(fol_idx) {
        let Some(fb) = fb else { continue };
        let hb = ((h1 / width).floor() as usize).min(n_h1 - 1);
        let cell = &mut sums[fb][hb];
        cell.0 += 1;
        cell.1 += p.twt as f64;
        cell.2 += p.rt as f64;
        if let Some(b) = p.beta {
            cell.3 += b;
            cell.4 += 1;
        }
    }
    let cells = sums
        .into_iter()
        .map(|row| {
            row.into_iter()
                .map(|(count, twt, rt, beta, n_beta)| HeatCell {
                    count,
                    mean_twt: (count > 0).then(|| twt / count as f64),
                    mean_rt: (count > 0).then(|| rt / count as f64),
                    mean_beta: (n_beta > 0).then(|| beta / n_beta as f64),
                })
                .collect()
        })
        .collect();
    HeatmapGrid {
        h1_bins,
        fol_bins,
        cells,
    }
}

impl HeatmapGrid {
    pub fn write_tsv(&self, stat: HeatStat, path: &Path) -> std::io::Result<()> {
        let mut out = String::from("h1_lo\th1_hi\tfol_lo\tfol_hi\tvalue\n");
        for (fb, row) in self.fol_bins.iter().zip(&self.cells) {
            for (hb, cell) in self.h1_bins.iter().zip(row) {
                let value = match stat {
                    HeatStat::Count => cell.count.to_string(),
                    HeatStat::MeanTwt => tsv::fixed(cell.mean_twt, 4),
                    HeatStat::MeanRt => tsv::fixed(cell.mean_rt, 4),
                    HeatStat::MeanBeta => tsv::sci(cell.mean_beta),
                };
                let _ = writeln!(
                    out,
                    "{:.4}\t{:.4}\t{}\t{}\t{value}",
                    hb.lo,
                    hb.hi,
                    fmt_edge(fb.lo),
                    fmt_edge(fb.hi)
                );
            }
        }
        tsv::write_file(path, &out)
    }

    pub fn write_dir(&self, dir: &Path) -> std::io::Result<()> {
        for stat in HeatStat::ALL {
            self.write_tsv(stat, &dir.join(stat.file_name()))?;
        }
        Ok(())
    }
}
