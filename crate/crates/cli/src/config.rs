//! Flat key = value config files whose keys mirror the CLI flag names.
//! Explicit flags always win over file values.

use std::collections::BTreeMap;
use std::path::Path;

use arboot_core::{
    ArModelSpec, ContaminationAmount, ContaminationSpec, ErrorDistribution, FitConfig, FitMethod,
    OutlierKind, OutlierTarget, RescaleMode, ScenarioConfig,
};
use nalgebra::{DMatrix, DVector};

use crate::CliError;

#[derive(Debug, Default, Clone)]
pub struct KvConfig {
    values: BTreeMap<String, String>,
}

impl KvConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input("config", format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut values = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::input(
                    "config",
                    format!("line {}: expected key = value, got {raw:?}", i + 1),
                ));
            };
            values.insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { values })
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|s| s.as_str())
    }

    pub fn parse_key<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.get(key) {
            None => Ok(None),
            Some(text) => text.parse::<T>().map(Some).map_err(|_| {
                CliError::input("config", format!("cannot parse {key} = {text:?}"))
            }),
        }
    }

    /// Overlay `other` on top of self (other wins).
    pub fn merged_with(&self, other: &KvConfig) -> KvConfig {
        let mut values = self.values.clone();
        for (k, v) in &other.values {
            values.insert(k.clone(), v.clone());
        }
        KvConfig { values }
    }
}

pub fn parse_f64_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::input("config", format!("bad number {s:?}")))
        })
        .collect()
}

pub fn parse_distribution(text: &str) -> Result<ErrorDistribution, CliError> {
    let t = text.trim().to_ascii_lowercase();
    if t == "gaussian" || t == "normal" {
        return Ok(ErrorDistribution::Gaussian);
    }
    if let Some(df) = t.strip_prefix("t:") {
        let df: f64 = df
            .parse()
            .map_err(|_| CliError::input("config", format!("bad degrees of freedom in {text:?}")))?;
        return Ok(ErrorDistribution::StudentT { df });
    }
    if let Some(df) = t.strip_prefix("chisq:") {
        let df: f64 = df
            .parse()
            .map_err(|_| CliError::input("config", format!("bad degrees of freedom in {text:?}")))?;
        return Ok(ErrorDistribution::ChiSquare { df });
    }
    Err(CliError::input(
        "config",
        format!("unknown distribution {text:?}; use gaussian, t:DF, or chisq:DF"),
    ))
}

pub fn distribution_text(dist: ErrorDistribution) -> String {
    match dist {
        ErrorDistribution::Gaussian => "gaussian".into(),
        ErrorDistribution::StudentT { df } => format!("t:{df}"),
        ErrorDistribution::ChiSquare { df } => format!("chisq:{df}"),
    }
}

pub fn parse_method(text: &str) -> Result<FitMethod, CliError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "ols" | "cml" | "ols_cml" => Ok(FitMethod::OlsCml),
        "weighted" | "wl" | "weighted_likelihood" => Ok(FitMethod::WeightedLikelihood),
        other => Err(CliError::input(
            "config",
            format!("unknown method {other:?}; use ols or weighted"),
        )),
    }
}

pub fn parse_rescale(text: &str) -> Result<RescaleMode, CliError> {
    match text.trim().to_ascii_lowercase().as_str() {
        "center" | "center_only" => Ok(RescaleMode::CenterOnly),
        "standardize" => Ok(RescaleMode::Standardize),
        other => Err(CliError::input(
            "config",
            format!("unknown rescale mode {other:?}; use center or standardize"),
        )),
    }
}

/// Build a model from config keys.
///
/// Univariate shorthand: `phi = 0.5,-0.2` (one scalar per lag) with
/// `phi0` and `sigma2`. General form: `n`, `p`, `phi0` (N values), one
/// `phiK = ...` row-major N*N block per lag, and `sigma` (N*N row-major).
pub fn model_from_kv(kv: &KvConfig) -> Result<ArModelSpec, CliError> {
    if let Some(phi) = kv.get("phi") {
        let phis = parse_f64_list(phi)?;
        let phi0 = kv.parse_key::<f64>("phi0")?.unwrap_or(0.0);
        let sigma2 = kv.parse_key::<f64>("sigma2")?.unwrap_or(1.0);
        return ArModelSpec::univariate(phi0, phis, sigma2).map_err(CliError::from);
    }
    let n: usize = kv
        .parse_key("n")?
        .ok_or_else(|| CliError::input("config", "model needs `phi = ...` or `n`/`p` keys"))?;
    let p: usize = kv
        .parse_key("p")?
        .ok_or_else(|| CliError::input("config", "missing lag order key `p`"))?;
    let phi0 = match kv.get("phi0") {
        None => DVector::zeros(n),
        Some(text) => {
            let v = parse_f64_list(text)?;
            if v.len() == 1 {
                DVector::from_element(n, v[0])
            } else if v.len() == n {
                DVector::from_vec(v)
            } else {
                return Err(CliError::input(
                    "config",
                    format!("phi0 needs 1 or {n} values"),
                ));
            }
        }
    };
    let mut phis = Vec::with_capacity(p);
    for lag in 1..=p {
        let key = format!("phi{lag}");
        let text = kv
            .get(&key)
            .ok_or_else(|| CliError::input("config", format!("missing lag matrix key `{key}`")))?;
        let v = parse_f64_list(text)?;
        if v.len() != n * n {
            return Err(CliError::input(
                "config",
                format!("{key} needs {} values (row-major), got {}", n * n, v.len()),
            ));
        }
        phis.push(DMatrix::from_row_slice(n, n, &v));
    }
    let sigma = match kv.get("sigma") {
        None => DMatrix::identity(n, n),
        Some(text) => {
            let v = parse_f64_list(text)?;
            if v.len() != n * n {
                return Err(CliError::input(
                    "config",
                    format!("sigma needs {} values (row-major), got {}", n * n, v.len()),
                ));
            }
            DMatrix::from_row_slice(n, n, &v)
        }
    };
    ArModelSpec::new(phi0, phis, sigma).map_err(CliError::from)
}

/// Optional flag overrides for `experiment` (flags win over file values).
#[derive(Debug, Default, Clone)]
pub struct ScenarioOverrides {
    pub mc_reps: Option<usize>,
    pub b_reps: Option<usize>,
    pub r_futures: Option<usize>,
    pub horizon: Option<usize>,
    pub gamma: Option<f64>,
    pub seed: Option<u64>,
    pub sample_t: Option<usize>,
    pub estimators: Option<String>,
    pub threads: Option<usize>,
}

pub struct ResolvedScenario {
    pub config: ScenarioConfig,
    pub threads: Option<usize>,
}

pub fn scenario_from_kv(
    kv: &KvConfig,
    overrides: &ScenarioOverrides,
) -> Result<ResolvedScenario, CliError> {
    let model = model_from_kv(kv)?;
    let n = model.dim_n();

    let estimators_text = overrides
        .estimators
        .clone()
        .or_else(|| kv.get("estimators").map(str::to_string))
        .unwrap_or_else(|| "ols,weighted".into());
    let estimators: Vec<FitMethod> = estimators_text
        .split(',')
        .map(parse_method)
        .collect::<Result<_, _>>()?;

    let mut fit = FitConfig::default();
    if let Some(c) = kv.parse_key("smoothing-c")? {
        fit.kernel_smoothing_c = c;
    }
    if let Some(tol) = kv.parse_key("tol")? {
        fit.tol = tol;
    }
    if let Some(mi) = kv.parse_key("max-iter")? {
        fit.max_iter = mi;
    }
    if let Some(text) = kv.get("rescale") {
        fit.rescale_mode = parse_rescale(text)?;
    }

    let contamination = match kv.get("contaminate").map(str::trim) {
        None | Some("none") => None,
        Some(kind_text) => {
            let kind = match kind_text.to_ascii_lowercase().as_str() {
                "ao" => OutlierKind::Ao,
                "io" => OutlierKind::Io,
                other => {
                    return Err(CliError::input(
                        "config",
                        format!("unknown contaminate kind {other:?}; use none, ao, or io"),
                    ))
                }
            };
            let target = match kv.get("target").unwrap_or("training").trim() {
                "training" => OutlierTarget::Training,
                "future" => OutlierTarget::Future,
                other => {
                    return Err(CliError::input(
                        "config",
                        format!("unknown target {other:?}; use training or future"),
                    ))
                }
            };
            let amount = match (kv.parse_key::<f64>("rate")?, kv.parse_key::<usize>("count")?) {
                (Some(_), Some(_)) => {
                    return Err(CliError::input("config", "set either rate or count, not both"))
                }
                (Some(rate), None) => ContaminationAmount::Rate(rate),
                (None, Some(count)) => ContaminationAmount::Count(count),
                (None, None) => {
                    return Err(CliError::input(
                        "config",
                        "contamination needs a rate (fraction) or count",
                    ))
                }
            };
            let delta = match kv.get("delta") {
                None => return Err(CliError::input("config", "contamination needs delta")),
                Some(text) => {
                    let v = parse_f64_list(text)?;
                    if v.len() == 1 {
                        DVector::from_element(n, v[0])
                    } else if v.len() == n {
                        DVector::from_vec(v)
                    } else {
                        return Err(CliError::input(
                            "config",
                            format!("delta needs 1 or {n} values"),
                        ));
                    }
                }
            };
            let component_mask = match kv.get("mask") {
                None => vec![true; n],
                Some(text) => {
                    let mut mask = vec![false; n];
                    for part in text.split(',') {
                        let idx: usize = part.trim().parse().map_err(|_| {
                            CliError::input("config", format!("bad mask entry {part:?}"))
                        })?;
                        if idx == 0 || idx > n {
                            return Err(CliError::input(
                                "config",
                                format!("mask component {idx} outside 1..={n}"),
                            ));
                        }
                        mask[idx - 1] = true;
                    }
                    mask
                }
            };
            Some(ContaminationSpec {
                kind,
                target,
                amount,
                delta,
                component_mask,
            })
        }
    };

    let error_dist = match kv.get("dist") {
        None => ErrorDistribution::Gaussian,
        Some(text) => parse_distribution(text)?,
    };

    let config = ScenarioConfig {
        model,
        sample_t: overrides
            .sample_t
            .or(kv.parse_key("sample-t")?)
            .unwrap_or(100),
        mc_reps: overrides.mc_reps.or(kv.parse_key("mc-reps")?).unwrap_or(200),
        b_reps: overrides.b_reps.or(kv.parse_key("b-reps")?).unwrap_or(499),
        r_futures: overrides
            .r_futures
            .or(kv.parse_key("r-futures")?)
            .unwrap_or(1000),
        horizon: overrides.horizon.or(kv.parse_key("horizon")?).unwrap_or(10),
        gamma: overrides.gamma.or(kv.parse_key("gamma")?).unwrap_or(0.05),
        contamination,
        error_dist,
        estimators,
        fit,
        seed: overrides.seed.or(kv.parse_key("seed")?).unwrap_or(1),
        burn_in: kv.parse_key("burn-in")?.unwrap_or(arboot_core::DEFAULT_BURN_IN),
        fit_order: kv.parse_key("fit-order")?,
    };
    let threads = overrides.threads.or(kv.parse_key("threads")?);
    Ok(ResolvedScenario { config, threads })
}

/// Render the fully resolved scenario back into config-file syntax.
pub fn resolved_text(resolved: &ResolvedScenario) -> String {
    let config = &resolved.config;
    let model = &config.model;
    let n = model.dim_n();
    let mut out = String::new();
    let mut push = |k: &str, v: String| out.push_str(&format!("{k} = {v}\n"));

    if n == 1 {
        let phis: Vec<String> = model
            .phis()
            .iter()
            .map(|m| format!("{}", m[(0, 0)]))
            .collect();
        push("phi", phis.join(","));
        push("phi0", format!("{}", model.phi0()[0]));
        push("sigma2", format!("{}", model.sigma_eps()[(0, 0)]));
    } else {
        push("n", n.to_string());
        push("p", model.order_p().to_string());
        let fmt_vec = |v: &DVector<f64>| {
            v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        let fmt_mat = |m: &DMatrix<f64>| {
            let mut parts = Vec::new();
            for r in 0..m.nrows() {
                for c in 0..m.ncols() {
                    parts.push(m[(r, c)].to_string());
                }
            }
            parts.join(",")
        };
        push("phi0", fmt_vec(model.phi0()));
        for (i, phi) in model.phis().iter().enumerate() {
            push(&format!("phi{}", i + 1), fmt_mat(phi));
        }
        push("sigma", fmt_mat(model.sigma_eps()));
    }
    push("sample-t", config.sample_t.to_string());
    push("mc-reps", config.mc_reps.to_string());
    push("b-reps", config.b_reps.to_string());
    push("r-futures", config.r_futures.to_string());
    push("horizon", config.horizon.to_string());
    push("gamma", config.gamma.to_string());
    push("seed", config.seed.to_string());
    push("burn-in", config.burn_in.to_string());
    push("dist", distribution_text(config.error_dist));
    push(
        "estimators",
        config
            .estimators
            .iter()
            .map(|m| m.tag())
            .collect::<Vec<_>>()
            .join(","),
    );
    match &config.contamination {
        None => push("contaminate", "none".into()),
        Some(c) => {
            push(
                "contaminate",
                match c.kind {
                    OutlierKind::Ao => "ao".into(),
                    OutlierKind::Io => "io".into(),
                },
            );
            push(
                "target",
                match c.target {
                    OutlierTarget::Training => "training".into(),
                    OutlierTarget::Future => "future".into(),
                },
            );
            match c.amount {
                ContaminationAmount::Rate(r) => push("rate", r.to_string()),
                ContaminationAmount::Count(k) => push("count", k.to_string()),
            }
            push(
                "delta",
                c.delta
                    .iter()
                    .map(|x| x.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
            push(
                "mask",
                c.component_mask
                    .iter()
                    .enumerate()
                    .filter(|(_, &m)| m)
                    .map(|(i, _)| (i + 1).to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
    }
    push("smoothing-c", config.fit.kernel_smoothing_c.to_string());
    push("tol", config.fit.tol.to_string());
    push("max-iter", config.fit.max_iter.to_string());
    push(
        "rescale",
        match config.fit.rescale_mode {
            RescaleMode::CenterOnly => "center".into(),
            RescaleMode::Standardize => "standardize".into(),
        },
    );
    if let Some(p) = config.fit_order {
        push("fit-order", p.to_string());
    }
    if let Some(t) = resolved.threads {
        push("threads", t.to_string());
    }
    out
}
