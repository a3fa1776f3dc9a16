//! Two-player adoption game between a standard pool and the N-scaled design,
//! played on top of passive background liquidity `X`.
//!
//! Fees are split pro rata to active depth; each player pays LVR on its
//! active capital and the dormant buffer earns `r_c`.

use serde::{Deserialize, Serialize};

use crate::error::{require_non_negative, require_positive, require_ratio, Error, Result};
use crate::lvr::{drag_rate, lvr_horizon};
use crate::parallel::{self, Execution};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PayoffInputs {
    /// Active capital per player.
    pub w: f64,
    /// Background passive liquidity.
    pub x_bg: f64,
    pub n_ratio: f64,
    pub sigma: f64,
    pub r_c: f64,
    /// Aggregate fee revenue over the horizon.
    pub f_max: f64,
    /// Horizon in years.
    pub t: f64,
}

impl PayoffInputs {
    pub fn validate(&self) -> Result<()> {
        require_positive("w", self.w)?;
        require_non_negative("x_bg", self.x_bg)?;
        require_ratio("n_ratio", self.n_ratio)?;
        require_non_negative("sigma", self.sigma)?;
        require_non_negative("r_c", self.r_c)?;
        require_non_negative("f_max", self.f_max)?;
        require_positive("t", self.t)?;
        Ok(())
    }

    pub fn with_background(&self, x_bg: f64) -> Self {
        Self { x_bg, ..*self }
    }

    /// Collateral yield `Y_C(T) = (1 - N) W r_c T`.
    pub fn collateral_yield(&self) -> f64 {
        (1.0 - self.n_ratio) * self.w * self.r_c * self.t
    }

    /// Per-unit fee yield `F_max / L_total` for a pool of depth `l_total`.
    /// Diagnostic only.
    pub fn fee_yield(&self, l_total: f64) -> f64 {
        self.f_max / l_total
    }

    fn lvr(&self) -> f64 {
        lvr_horizon(self.sigma, self.w, self.t)
    }

    /// `(1 - N)(sigma^2/8 + r_c)`, the defensive gain per unit capital and year.
    pub fn defensive_rate(&self) -> f64 {
        (1.0 - self.n_ratio) * (drag_rate(self.sigma) + self.r_c)
    }
}

/// Row player's payoff for each profile. The game is symmetric, so the
/// column player's payoff in `(a, b)` is the row payoff of `(b, a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PayoffMatrix {
    pub pi_std_std: f64,
    pub pi_hlcp_std: f64,
    pub pi_std_hlcp: f64,
    pub pi_hlcp_hlcp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Strategy {
    Std,
    Hlcp,
}

impl Strategy {
    pub const ALL: [Strategy; 2] = [Strategy::Std, Strategy::Hlcp];

    pub fn other(self) -> Self {
        match self {
            Strategy::Std => Strategy::Hlcp,
            Strategy::Hlcp => Strategy::Std,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Strategy::Std => "std",
            Strategy::Hlcp => "hlcp",
        }
    }
}

impl PayoffMatrix {
    pub fn payoff(&self, own: Strategy, opponent: Strategy) -> f64 {
        match (own, opponent) {
            (Strategy::Std, Strategy::Std) => self.pi_std_std,
            (Strategy::Hlcp, Strategy::Std) => self.pi_hlcp_std,
            (Strategy::Std, Strategy::Hlcp) => self.pi_std_hlcp,
            (Strategy::Hlcp, Strategy::Hlcp) => self.pi_hlcp_hlcp,
        }
    }
}

pub fn payoff_matrix(inputs: &PayoffInputs) -> PayoffMatrix {
    let PayoffInputs {
        w, x_bg, n_ratio, f_max, ..
    } = *inputs;
    let lvr = inputs.lvr();
    let y_c = inputs.collateral_yield();
    let nw = n_ratio * w;
    PayoffMatrix {
        pi_std_std: w / (x_bg + 2.0 * w) * f_max - lvr,
        pi_hlcp_std: nw / (x_bg + (1.0 + n_ratio) * w) * f_max - n_ratio * lvr + y_c,
        pi_std_hlcp: w / (x_bg + (1.0 + n_ratio) * w) * f_max - lvr,
        pi_hlcp_hlcp: nw / (x_bg + 2.0 * nw) * f_max - n_ratio * lvr + y_c,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileReport {
    pub row: Strategy,
    pub col: Strategy,
    /// Gain to the row player from switching strategy.
    pub row_deviation_gain: f64,
    pub col_deviation_gain: f64,
    pub is_nash: bool,
    /// Nash with at least one zero deviation gain.
    pub weak: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashReport {
    pub matrix: PayoffMatrix,
    pub profiles: [ProfileReport; 4],
    /// `pi_hlcp_std - pi_std_std`: deviating to HLCP against a standard pool.
    pub step1_margin: f64,
    /// `pi_hlcp_hlcp - pi_std_hlcp`: staying with HLCP against an HLCP pool.
    pub step2_margin: f64,
}

impl NashReport {
    pub fn equilibria(&self) -> impl Iterator<Item = &ProfileReport> {
        self.profiles.iter().filter(|p| p.is_nash)
    }

    /// The single Nash profile, if exactly one exists.
    pub fn unique_nash(&self) -> Option<(Strategy, Strategy)> {
        let mut it = self.equilibria();
        match (it.next(), it.next()) {
            (Some(p), None) => Some((p.row, p.col)),
            _ => None,
        }
    }

    /// Compact label, e.g. `hlcp/hlcp`, `std/std+hlcp/hlcp`, or `none`.
    pub fn profile_label(&self) -> String {
        let labels: Vec<String> = self
            .equilibria()
            .map(|p| {
                let tag = if p.weak { "~" } else { "" };
                format!("{tag}{}/{}", p.row.label(), p.col.label())
            })
            .collect();
        if labels.is_empty() {
            "none".to_string()
        } else {
            labels.join("+")
        }
    }
}

pub fn nash_from_matrix(matrix: PayoffMatrix) -> NashReport {
    let mut profiles = [ProfileReport {
        row: Strategy::Std,
        col: Strategy::Std,
        row_deviation_gain: 0.0,
        col_deviation_gain: 0.0,
        is_nash: false,
        weak: false,
    }; 4];
    let mut i = 0;
    for row in Strategy::ALL {
        for col in Strategy::ALL {
            let row_gain = matrix.payoff(row.other(), col) - matrix.payoff(row, col);
            let col_gain = matrix.payoff(col.other(), row) - matrix.payoff(col, row);
            let is_nash = row_gain <= 0.0 && col_gain <= 0.0;
            profiles[i] = ProfileReport {
                row,
                col,
                row_deviation_gain: row_gain,
                col_deviation_gain: col_gain,
                is_nash,
                weak: is_nash && (row_gain == 0.0 || col_gain == 0.0),
            };
            i += 1;
        }
    }
    NashReport {
        matrix,
        profiles,
        step1_margin: matrix.pi_hlcp_std - matrix.pi_std_std,
        step2_margin: matrix.pi_hlcp_hlcp - matrix.pi_std_hlcp,
    }
}

pub fn nash_check(inputs: &PayoffInputs) -> NashReport {
    nash_from_matrix(payoff_matrix(inputs))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitCondition {
    /// `(1 - N)(sigma^2/8 + r_c)`.
    pub lhs: f64,
    /// `dF(T) / (W T)`.
    pub fee_loss_rate: f64,
}

impl LimitCondition {
    pub fn deviation_pays(&self) -> bool {
        self.lhs > self.fee_loss_rate
    }
}

/// Both sides of the unilateral-deviation inequality, normalized by `W T`.
pub fn limit_condition(inputs: &PayoffInputs) -> LimitCondition {
    let PayoffInputs {
        w,
        x_bg,
        n_ratio,
        f_max,
        t,
        ..
    } = *inputs;
    let fee_loss = f_max * w * (1.0 / (x_bg + 2.0 * w) - n_ratio / (x_bg + (1.0 + n_ratio) * w));
    LimitCondition {
        lhs: inputs.defensive_rate(),
        fee_loss_rate: fee_loss / (w * t),
    }
}

/// Fee share `N W / (N X + 2 N W)` when background liquidity is compressed by
/// the same `N`.
pub fn symmetric_fee_share(w: f64, x_bg: f64, n_ratio: f64) -> f64 {
    let nw = n_ratio * w;
    nw / (n_ratio * x_bg + 2.0 * nw)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParetoReport {
    pub pi_std_std: f64,
    pub pi_hlcp_hlcp: f64,
    pub improvement: f64,
    pub fee_share_std: f64,
    pub fee_share_hlcp: f64,
    pub improves: bool,
    pub strict: bool,
}

/// Symmetric-compression comparison of all-HLCP against all-standard.
pub fn pareto_check(inputs: &PayoffInputs) -> ParetoReport {
    let PayoffInputs {
        w,
        x_bg,
        n_ratio,
        f_max,
        ..
    } = *inputs;
    let lvr = inputs.lvr();
    let fee_share_std = w / (x_bg + 2.0 * w);
    let fee_share_hlcp = symmetric_fee_share(w, x_bg, n_ratio);
    let pi_std_std = fee_share_std * f_max - lvr;
    let pi_hlcp_hlcp = fee_share_hlcp * f_max - n_ratio * lvr + inputs.collateral_yield();
    let improvement = pi_hlcp_hlcp - pi_std_std;
    ParetoReport {
        pi_std_std,
        pi_hlcp_hlcp,
        improvement,
        fee_share_std,
        fee_share_hlcp,
        improves: improvement >= 0.0,
        strict: improvement > 0.0,
    }
}

/// Smallest background liquidity in `[lo, hi]` at which both deviation
/// margins are positive, found by bisection in log space. `None` if the
/// bracket does not straddle the switch.
pub fn crossover_background(inputs: &PayoffInputs, lo: f64, hi: f64) -> Result<Option<f64>> {
    inputs.validate()?;
    if !(lo > 0.0 && hi > lo) {
        return Err(Error::Validation(format!("bad bracket [{lo}, {hi}]")));
    }
    let pays = |x: f64| {
        let r = nash_check(&inputs.with_background(x));
        r.step1_margin > 0.0 && r.step2_margin > 0.0
    };
    if pays(lo) || !pays(hi) {
        return Ok(None);
    }
    let (mut a, mut b) = (lo.ln(), hi.ln());
    for _ in 0..200 {
        let mid = 0.5 * (a + b);
        if pays(mid.exp()) {
            b = mid;
        } else {
            a = mid;
        }
        if b - a < 1e-14 {
            break;
        }
    }
    Ok(Some(b.exp()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    #[serde(rename = "W")]
    pub w: f64,
    #[serde(rename = "X")]
    pub x_bg: f64,
    #[serde(rename = "N")]
    pub n_ratio: f64,
    pub sigma: f64,
    pub r_c: f64,
    #[serde(rename = "F_max")]
    pub f_max: f64,
    #[serde(rename = "T")]
    pub t: f64,
    pub pi_std_std: f64,
    pub pi_hlcp_std: f64,
    pub pi_std_hlcp: f64,
    pub pi_hlcp_hlcp: f64,
    pub nash_profile: String,
}

impl SweepRow {
    pub fn evaluate(inputs: &PayoffInputs) -> Self {
        let report = nash_check(inputs);
        let m = report.matrix;
        Self {
            w: inputs.w,
            x_bg: inputs.x_bg,
            n_ratio: inputs.n_ratio,
            sigma: inputs.sigma,
            r_c: inputs.r_c,
            f_max: inputs.f_max,
            t: inputs.t,
            pi_std_std: m.pi_std_std,
            pi_hlcp_std: m.pi_hlcp_std,
            pi_std_hlcp: m.pi_std_hlcp,
            pi_hlcp_hlcp: m.pi_hlcp_hlcp,
            nash_profile: report.profile_label(),
        }
    }
}

/// `points` values spaced geometrically over `[lo, hi]`, inclusive.
pub fn geometric_grid(lo: f64, hi: f64, points: usize) -> Result<Vec<f64>> {
    if !(lo > 0.0 && hi >= lo) || points == 0 {
        return Err(Error::Validation(format!(
            "geometric grid needs 0 < lo <= hi and points > 0, got [{lo}, {hi}] x {points}"
        )));
    }
    if points == 1 {
        return Ok(vec![lo]);
    }
    let (a, b) = (lo.ln(), hi.ln());
    let step = (b - a) / (points - 1) as f64;
    Ok((0..points)
        .map(|i| match i {
            0 => lo,
            i if i == points - 1 => hi,
            i => (a + step * i as f64).exp(),
        })
        .collect())
}

/// Evaluates the game at every background level in `xs`.
pub fn sweep_background(base: &PayoffInputs, xs: &[f64], exec: Execution) -> Result<Vec<SweepRow>> {
    base.validate()?;
    let inputs: Vec<PayoffInputs> = xs.iter().map(|&x| base.with_background(x)).collect();
    for i in &inputs {
        i.validate()?;
    }
    Ok(parallel::map(&inputs, exec, SweepRow::evaluate))
}
