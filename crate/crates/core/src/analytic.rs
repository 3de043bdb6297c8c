//! Closed-form estimates of the latency and power cost of PRIL-M and
//! PRIL-ML, and their composition with measured baselines.
//!
//! Everything is exact rational arithmetic; rounding happens only when a
//! value is formatted.

use num_rational::Ratio;
use serde::Serialize;

use crate::pril::PrilError;

pub type Exact = Ratio<i128>;

const US_PER_S: i128 = 1_000_000;

/// `(T_min / 2, T_min)`, in microseconds.
pub fn pril_m_deltas(t_min_us: u64) -> (Exact, Exact) {
    let t = Exact::from_integer(i128::from(t_min_us));
    (t / 2, t)
}

/// `(T_act / 2, T_act)` with `T_act = ceil(T_min / r)`, in microseconds.
pub fn pril_ml_deltas(t_min_us: u64, r: u8) -> Result<(Exact, Exact), PrilError> {
    if r == 0 {
        return Err(PrilError::ZeroSubdivision);
    }
    let t_act = Exact::from_integer(i128::from(t_min_us.div_ceil(u64::from(r))));
    Ok((t_act / 2, t_act))
}

/// Worst-case extra receiver power of PRIL-ML over PRIL-M,
/// `(r - 1) * E_listen / T_min`, in microwatts. An upper bound: wake
/// instances that find a frame cost nothing extra.
pub fn delta_p_uw(r: u8, e_listen_nj: u64, t_min_us: u64) -> Result<Exact, PrilError> {
    if r == 0 {
        return Err(PrilError::ZeroSubdivision);
    }
    if t_min_us == 0 {
        return Err(PrilError::ZeroPeriod);
    }
    // nJ / us = mW
    Ok(Exact::new((i128::from(r) - 1) * i128::from(e_listen_nj) * 1000, i128::from(t_min_us)))
}

/// Measured inputs, all in seconds or microwatts.
#[derive(Debug, Clone, PartialEq)]
pub struct Baselines {
    /// Mean and maximum latency of the flow of interest under TSCH.
    pub tsch_mean_s: Exact,
    pub tsch_max_s: Exact,
    /// Network-wide power under PRIL-M.
    pub pril_m_power_uw: Exact,
    /// Idle-listening power under PRIL-M of the node receiving on the
    /// PRIL-ML link.
    pub pril_m_listen_uw: Exact,
}

/// One PRIL-ML link: fastest-flow period, windows, idle-listen energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkModel {
    pub t_min_us: u64,
    pub r: u8,
    pub e_listen_nj: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPrediction {
    pub t_min_us: u64,
    pub r: u8,
    pub pril_m_mean_delta_s: Exact,
    pub pril_m_max_delta_s: Exact,
    pub pril_ml_mean_delta_s: Exact,
    pub pril_ml_max_delta_s: Exact,
    pub delta_p_uw: Exact,
    pub pril_m_mean_s: Exact,
    pub pril_m_max_s: Exact,
    pub pril_ml_mean_s: Exact,
    pub pril_ml_max_s: Exact,
    pub pril_ml_power_uw: Exact,
    pub pril_ml_listen_uw: Exact,
}

fn us_to_s(x: Exact) -> Exact {
    x / US_PER_S
}

/// Baseline latency plus the technique's delay, baseline PRIL-M power plus
/// the summed bound of every PRIL-ML link. Latency deltas come from `links[0]`.
pub fn compose_predictions(base: &Baselines, links: &[LinkModel]) -> Result<AnalyticPrediction, PrilError> {
    let main = *links.first().ok_or(PrilError::ZeroPeriod)?;
    let (m_mean, m_max) = pril_m_deltas(main.t_min_us);
    let (ml_mean, ml_max) = pril_ml_deltas(main.t_min_us, main.r)?;
    let mut dp = Exact::from_integer(0);
    for l in links {
        dp += delta_p_uw(l.r, l.e_listen_nj, l.t_min_us)?;
    }
    Ok(AnalyticPrediction {
        t_min_us: main.t_min_us,
        r: main.r,
        pril_m_mean_delta_s: us_to_s(m_mean),
        pril_m_max_delta_s: us_to_s(m_max),
        pril_ml_mean_delta_s: us_to_s(ml_mean),
        pril_ml_max_delta_s: us_to_s(ml_max),
        delta_p_uw: dp,
        pril_m_mean_s: base.tsch_mean_s + us_to_s(m_mean),
        pril_m_max_s: base.tsch_max_s + us_to_s(m_max),
        pril_ml_mean_s: base.tsch_mean_s + us_to_s(ml_mean),
        pril_ml_max_s: base.tsch_max_s + us_to_s(ml_max),
        pril_ml_power_uw: base.pril_m_power_uw + dp,
        pril_ml_listen_uw: base.pril_m_listen_uw + dp,
    })
}

/// Decimal rendering rounded half away from zero.
pub fn format_half_up(x: Exact, decimals: u32) -> String {
    let scale = 10i128.pow(decimals);
    let scaled = x * scale;
    let neg = scaled < Exact::from_integer(0);
    let mag = if neg { -scaled } else { scaled };
    let q = (mag + Exact::new(1, 2)).floor().to_integer();
    let int = q / scale;
    let frac = q % scale;
    let sign = if neg && q != 0 { "-" } else { "" };
    if decimals == 0 {
        format!("{sign}{int}")
    } else {
        format!("{sign}{int}.{frac:0width$}", width = decimals as usize)
    }
}

/// Exact value of a decimal literal such as `"68.6"` or `"-0.040"`.
pub fn parse_decimal(text: &str) -> Option<Exact> {
    let t = text.trim();
    let (neg, t) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t),
    };
    let (int, frac) = t.split_once('.').unwrap_or((t, ""));
    if (int.is_empty() && frac.is_empty()) || frac.len() > 30 {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits: i128 = format!("{int}{frac}").parse().ok()?;
    let v = Exact::new(digits, 10i128.pow(frac.len() as u32));
    Some(if neg { -v } else { v })
}

/// Exact value of a number printed with at most `decimals` decimals.
pub fn exact_from_printed(x: f64, decimals: u32) -> Exact {
    let scale = 10i128.pow(decimals);
    Exact::new((x * scale as f64).round() as i128, scale)
}

/// Display form: seconds with three decimals, microwatts with one.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PredictionTable {
    pub t_min_s: String,
    pub r: u8,
    pub delta_mu_pril_m_s: String,
    pub delta_max_pril_m_s: String,
    pub delta_mu_pril_ml_s: String,
    pub delta_max_pril_ml_s: String,
    pub delta_p_uw: String,
    pub mu_hat_pril_m_s: String,
    pub dmax_hat_pril_m_s: String,
    pub mu_hat_pril_ml_s: String,
    pub dmax_hat_pril_ml_s: String,
    pub p_hat_pril_ml_uw: String,
    pub p_listen_hat_pril_ml_uw: String,
}

impl AnalyticPrediction {
    pub fn table(&self) -> PredictionTable {
        let s = |x: Exact| format_half_up(x, 3);
        let p = |x: Exact| format_half_up(x, 1);
        PredictionTable {
            t_min_s: s(Exact::new(i128::from(self.t_min_us), US_PER_S)),
            r: self.r,
            delta_mu_pril_m_s: s(self.pril_m_mean_delta_s),
            delta_max_pril_m_s: s(self.pril_m_max_delta_s),
            delta_mu_pril_ml_s: s(self.pril_ml_mean_delta_s),
            delta_max_pril_ml_s: s(self.pril_ml_max_delta_s),
            delta_p_uw: p(self.delta_p_uw),
            mu_hat_pril_m_s: s(self.pril_m_mean_s),
            dmax_hat_pril_m_s: s(self.pril_m_max_s),
            mu_hat_pril_ml_s: s(self.pril_ml_mean_s),
            dmax_hat_pril_ml_s: s(self.pril_ml_max_s),
            p_hat_pril_ml_uw: p(self.pril_ml_power_uw),
            p_listen_hat_pril_ml_uw: p(self.pril_ml_listen_uw),
        }
    }

    /// Human-readable two-column table.
    pub fn render_text(&self) -> String {
        let t = self.table();
        let rows = [
            ("T_min (s)", t.t_min_s.clone()),
            ("r", t.r.to_string()),
            ("delta mu PRIL-M (s)", t.delta_mu_pril_m_s.clone()),
            ("delta max PRIL-M (s)", t.delta_max_pril_m_s.clone()),
            ("delta mu PRIL-ML (s)", t.delta_mu_pril_ml_s.clone()),
            ("delta max PRIL-ML (s)", t.delta_max_pril_ml_s.clone()),
            ("delta P (uW)", t.delta_p_uw.clone()),
            ("mu PRIL-M (s)", t.mu_hat_pril_m_s.clone()),
            ("d_max PRIL-M (s)", t.dmax_hat_pril_m_s.clone()),
            ("mu PRIL-ML (s)", t.mu_hat_pril_ml_s.clone()),
            ("d_max PRIL-ML (s)", t.dmax_hat_pril_ml_s.clone()),
            ("P PRIL-ML (uW)", t.p_hat_pril_ml_uw.clone()),
            ("P_listen PRIL-ML (uW)", t.p_listen_hat_pril_ml_uw.clone()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v:>10}\n")).collect()
    }
}
