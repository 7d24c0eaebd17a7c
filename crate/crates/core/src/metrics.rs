//! Verification metrics over per-user score lists.
//!
//! Scores are oriented so that higher means more genuine: a sample is
//! accepted at threshold `t` when its score is `≥ t`.

use std::fmt::{self, Write as _};
use std::io::Write;

use crate::error::{Error, Result};

fn check_scores(name: &str, scores: &[f64]) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::Report(format!("{name} score list is empty")));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::Report(format!("{name} score {s} is not finite")));
    }
    Ok(())
}

/// Fraction of genuine scores below `t`.
pub fn frr_at(genuine: &[f64], t: f64) -> f64 {
    genuine.iter().filter(|&&s| s < t).count() as f64 / genuine.len() as f64
}

/// Fraction of forgery scores at or above `t`.
pub fn far_at(forgery: &[f64], t: f64) -> f64 {
    forgery.iter().filter(|&&s| s >= t).count() as f64 / forgery.len() as f64
}

/// `(FRR, FAR)` at threshold `t`; FAR is `None` without forgeries.
pub fn far_frr_at_threshold(genuine: &[f64], forgery: &[f64], t: f64) -> Result<(f64, Option<f64>)> {
    check_scores("genuine", genuine)?;
    let far = if forgery.is_empty() {
        None
    } else {
        check_scores("forgery", forgery)?;
        Some(far_at(forgery, t))
    };
    Ok((frr_at(genuine, t), far))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RocPoint {
    pub far: f64,
    pub frr: f64,
    pub threshold: f64,
}

/// Operating points at every distinct score plus the `±∞` sentinels,
/// ordered by increasing FAR (decreasing threshold).
pub fn roc_curve(genuine: &[f64], forgery: &[f64]) -> Result<Vec<RocPoint>> {
    check_scores("genuine", genuine)?;
    check_scores("forgery", forgery)?;
    let mut thresholds: Vec<f64> = genuine.iter().chain(forgery).copied().collect();
    thresholds.push(f64::INFINITY);
    thresholds.push(f64::NEG_INFINITY);
    thresholds.sort_by(|a, b| b.total_cmp(a));
    thresholds.dedup();

    let mut g = genuine.to_vec();
    let mut f = forgery.to_vec();
    g.sort_by(f64::total_cmp);
    f.sort_by(f64::total_cmp);
    let (n, m) = (g.len() as f64, f.len() as f64);
    Ok(thresholds
        .into_iter()
        .map(|t| RocPoint {
            far: (f.len() - f.partition_point(|&s| s < t)) as f64 / m,
            frr: g.partition_point(|&s| s < t) as f64 / n,
            threshold: t,
        })
        .collect())
}

/// Equal error rate: the ROC point where FAR = FRR, linearly interpolated
/// between the two points that bracket the sign change of FAR − FRR.
pub fn eer(genuine: &[f64], forgery: &[f64]) -> Result<f64> {
    let roc = roc_curve(genuine, forgery)?;
    // walk from +∞ (FAR 0, FRR 1) towards −∞ (FAR 1, FRR 0)
    let mut prev = roc[0];
    for &p in &roc[1..] {
        let d = p.far - p.frr;
        if d == 0.0 {
            return Ok(p.far);
        }
        if d > 0.0 {
            let d0 = prev.far - prev.frr;
            let lambda = d0 / (d0 - d);
            return Ok(prev.far + lambda * (p.far - prev.far));
        }
        prev = p;
    }
    unreachable!("the −∞ sentinel always has FAR 1 and FRR 0")
}

/// Area under the ROC curve as the rank statistic
/// `P(genuine > forgery) + ½·P(genuine = forgery)`, computed from integer
/// pair counts.
pub fn auc(genuine: &[f64], forgery: &[f64]) -> Result<f64> {
    check_scores("genuine", genuine)?;
    check_scores("forgery", forgery)?;
    let mut f = forgery.to_vec();
    f.sort_by(f64::total_cmp);
    let mut twice_wins: u64 = 0;
    for &s in genuine {
        let below = f.partition_point(|&x| x < s) as u64;
        let tied = f.partition_point(|&x| x <= s) as u64 - below;
        twice_wins += 2 * below + tied;
    }
    Ok(twice_wins as f64 / (2 * genuine.len() as u64 * f.len() as u64) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ForgeryKind {
    Random,
    Simple,
    Skilled,
}

/// Scores of one enrolled user's test set. Absent forgery types are empty.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct UserScores {
    pub user: usize,
    pub genuine: Vec<f64>,
    pub random: Vec<f64>,
    pub simple: Vec<f64>,
    pub skilled: Vec<f64>,
}

impl UserScores {
    pub fn forgeries(&self, kind: ForgeryKind) -> &[f64] {
        match kind {
            ForgeryKind::Random => &self.random,
            ForgeryKind::Simple => &self.simple,
            ForgeryKind::Skilled => &self.skilled,
        }
    }
}

/// Which error columns a report carries.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportLayout {
    /// FRR, FAR (skilled), EER, mean AUC.
    GenuineSkilled,
    /// FRR, FAR for random, simple and skilled forgeries, AER,
    /// AER/EER/mean AUC over genuine + skilled.
    AllForgeries,
}

impl ReportLayout {
    fn kinds(self) -> &'static [ForgeryKind] {
        match self {
            ReportLayout::GenuineSkilled => &[ForgeryKind::Skilled],
            ReportLayout::AllForgeries => &[ForgeryKind::Random, ForgeryKind::Simple, ForgeryKind::Skilled],
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct UserReport {
    pub user: usize,
    /// Rates at the default threshold 0.
    pub frr: f64,
    pub far_random: Option<f64>,
    pub far_simple: Option<f64>,
    pub far_skilled: Option<f64>,
    /// Genuine vs skilled, user-specific threshold.
    pub eer: f64,
    pub auc: f64,
}

impl UserReport {
    /// Mean of FRR and the three FARs, when all are present.
    pub fn aer(&self) -> Option<f64> {
        match (self.far_random, self.far_simple, self.far_skilled) {
            (Some(r), Some(s), Some(k)) => Some(average_error_rate(&[self.frr, r, s, k])),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Summary {
    /// Pooled rates at threshold 0.
    pub frr: f64,
    pub far_random: Option<f64>,
    pub far_simple: Option<f64>,
    pub far_skilled: f64,
    pub aer: Option<f64>,
    pub aer_genuine_skilled: f64,
    pub mean_eer: f64,
    pub mean_auc: f64,
    pub min_auc: f64,
    pub max_auc: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalReport {
    pub layout: ReportLayout,
    pub users: Vec<UserReport>,
    pub summary: Summary,
}

/// Mean of a list of error rates.
pub fn average_error_rate(rates: &[f64]) -> f64 {
    rates.iter().sum::<f64>() / rates.len() as f64
}

/// A fraction expressed in hundredths of a percent, rounded half away from
/// zero after snapping binary noise below 1e-6 %.
pub fn percent_hundredths(fraction: f64) -> i64 {
    let micro = (fraction * 1e8).round() as i64;
    let half = if micro >= 0 { 5_000 } else { -5_000 };
    (micro + half) / 10_000
}

/// Two-decimal percentage, e.g. `0.07585 → "7.59"`.
pub fn format_percent(fraction: f64) -> String {
    let h = percent_hundredths(fraction);
    let sign = if h < 0 { "-" } else { "" };
    format!("{sign}{}.{:02}", h.abs() / 100, h.abs() % 100)
}

fn pooled_rate(users: &[UserScores], pick: impl Fn(&UserScores) -> (usize, usize)) -> f64 {
    let (hits, total) = users.iter().map(pick).fold((0, 0), |a, b| (a.0 + b.0, a.1 + b.1));
    hits as f64 / total as f64
}

/// Builds the per-user and aggregate report. Every user must carry the
/// forgery types the layout requires.
pub fn aggregate(users: &[UserScores], layout: ReportLayout) -> Result<EvalReport> {
    if users.is_empty() {
        return Err(Error::Report("no users to report".into()));
    }
    for u in users {
        check_scores("genuine", &u.genuine)?;
        for &kind in layout.kinds() {
            if u.forgeries(kind).is_empty() {
                return Err(Error::Report(format!(
                    "user {} has no {kind:?} forgery scores, required by the {layout:?} layout",
                    u.user
                )));
            }
        }
    }
    let wants = |kind| layout.kinds().contains(&kind);
    let far_opt = |u: &UserScores, kind| wants(kind).then(|| far_at(u.forgeries(kind), 0.0));
    let per_user = users
        .iter()
        .map(|u| {
            Ok(UserReport {
                user: u.user,
                frr: frr_at(&u.genuine, 0.0),
                far_random: far_opt(u, ForgeryKind::Random),
                far_simple: far_opt(u, ForgeryKind::Simple),
                far_skilled: far_opt(u, ForgeryKind::Skilled),
                eer: eer(&u.genuine, &u.skilled)?,
                auc: auc(&u.genuine, &u.skilled)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let frr = pooled_rate(users, |u| (u.genuine.iter().filter(|&&s| s < 0.0).count(), u.genuine.len()));
    let far = |kind| {
        wants(kind).then(|| {
            pooled_rate(users, |u| {
                let f = u.forgeries(kind);
                (f.iter().filter(|&&s| s >= 0.0).count(), f.len())
            })
        })
    };
    let (far_random, far_simple) = (far(ForgeryKind::Random), far(ForgeryKind::Simple));
    let far_skilled = far(ForgeryKind::Skilled).expect("every layout includes skilled forgeries");
    let aer = match (far_random, far_simple) {
        (Some(r), Some(s)) => Some(average_error_rate(&[frr, r, s, far_skilled])),
        _ => None,
    };
    let n = per_user.len() as f64;
    let summary = Summary {
        frr,
        far_random,
        far_simple,
        far_skilled,
        aer,
        aer_genuine_skilled: average_error_rate(&[frr, far_skilled]),
        mean_eer: per_user.iter().map(|u| u.eer).sum::<f64>() / n,
        mean_auc: per_user.iter().map(|u| u.auc).sum::<f64>() / n,
        min_auc: per_user.iter().map(|u| u.auc).fold(f64::INFINITY, f64::min),
        max_auc: per_user.iter().map(|u| u.auc).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(EvalReport {
        layout,
        users: per_user,
        summary,
    })
}

fn opt(v: Option<f64>) -> String {
    v.map(|v| format!("{v:?}")).unwrap_or_default()
}

impl EvalReport {
    /// One row per user, then `mean` (per-user averages) and `global`
    /// (pooled threshold-0 rates) rows. Values are fractions at full
    /// precision.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "user,frr,far_random,far_simple,far_skilled,aer,aer_genuine_skilled,eer,auc")?;
        for u in &self.users {
            writeln!(
                w,
                "{},{:?},{},{},{},{},{},{:?},{:?}",
                u.user,
                u.frr,
                opt(u.far_random),
                opt(u.far_simple),
                opt(u.far_skilled),
                opt(u.aer()),
                opt(u.far_skilled.map(|f| average_error_rate(&[u.frr, f]))),
                u.eer,
                u.auc
            )?;
        }
        let s = &self.summary;
        writeln!(w, "mean,,,,,,,{:?},{:?}", s.mean_eer, s.mean_auc)?;
        writeln!(
            w,
            "global,{:?},{},{},{:?},{},{:?},,",
            s.frr,
            opt(s.far_random),
            opt(s.far_simple),
            s.far_skilled,
            opt(s.aer),
            s.aer_genuine_skilled
        )?;
        Ok(())
    }

    /// Table-style summary with errors in percent (two decimals).
    pub fn summary_table(&self) -> String {
        let s = &self.summary;
        let mut out = String::new();
        match self.layout {
            ReportLayout::GenuineSkilled => {
                let _ = writeln!(out, "{:>8} {:>8} {:>8} {:>9}", "FRR", "FAR", "EER", "Mean AUC");
                let _ = writeln!(
                    out,
                    "{:>8} {:>8} {:>8} {:>9.4}",
                    format_percent(s.frr),
                    format_percent(s.far_skilled),
                    format_percent(s.mean_eer),
                    s.mean_auc
                );
            }
            ReportLayout::AllForgeries => {
                let _ = writeln!(
                    out,
                    "{:>8} {:>10} {:>10} {:>11} {:>8} {:>9} {:>9} {:>9}",
                    "FRR", "FAR_rand", "FAR_simple", "FAR_skilled", "AER", "AER_g+s", "EER_g+s", "AUC_g+s"
                );
                let _ = writeln!(
                    out,
                    "{:>8} {:>10} {:>10} {:>11} {:>8} {:>9} {:>9} {:>9.4}",
                    format_percent(s.frr),
                    format_percent(s.far_random.unwrap_or(f64::NAN)),
                    format_percent(s.far_simple.unwrap_or(f64::NAN)),
                    format_percent(s.far_skilled),
                    format_percent(s.aer.unwrap_or(f64::NAN)),
                    format_percent(s.aer_genuine_skilled),
                    format_percent(s.mean_eer),
                    s.mean_auc
                );
            }
        }
        let _ = writeln!(out, "users: {}  AUC range: [{:.4}, {:.4}]", self.users.len(), s.min_auc, s.max_auc);
        out
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.summary_table())
    }
}
