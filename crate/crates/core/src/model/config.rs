//! JSON model configuration and the builtin models.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::measure::EmpiricalMeasure1D;

use super::expr::{Expr, Var};
use super::laws::{validate_atoms, Atom, ContinuousLaw, InitialLaw, NuSpec};
use super::ModelSpec;

/// Raw model tree. Builtins read their overrides from `params`; a `custom`
/// model gives every coefficient at the top level.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ModelConfig {
    pub model: String,
    #[serde(default)]
    pub params: Params,
    pub b: Option<Expr>,
    pub sigma: Option<Expr>,
    pub f: Option<Expr>,
    pub psi: Option<Expr>,
    pub nu1: Option<Value>,
    pub f_max: Option<f64>,
    pub init: Option<Value>,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Params {
    pub eps: Option<f64>,
    pub b: Option<Expr>,
    pub sigma: Option<Expr>,
    pub f: Option<Expr>,
    pub f_max: Option<f64>,
    pub nu1: Option<Value>,
    pub init: Option<Value>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Builtin {
    Example1,
    Example2,
    Example3,
    ArctanRademacher,
    Custom,
}

impl Builtin {
    fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "example1" => Builtin::Example1,
            "example2" => Builtin::Example2,
            "example3" => Builtin::Example3,
            "arctan_rademacher" => Builtin::ArctanRademacher,
            "custom" => Builtin::Custom,
            other => return Err(Error::UnknownModel(other.to_string())),
        })
    }
}

pub const DEFAULT_EPS: f64 = 0.5;

/// Builds and validates a model from its JSON tree.
pub fn build_model(value: &Value) -> Result<ModelSpec> {
    let cfg: ModelConfig = serde_json::from_value(value.clone())
        .map_err(|e| Error::Config(format!("malformed model config: {e}")))?;
    let kind = Builtin::from_name(&cfg.model)?;
    let p = &cfg.params;
    let pick = |top: &Option<Expr>, param: &Option<Expr>| param.clone().or_else(|| top.clone());

    let (drift, diffusion, rate, kernel) = match kind {
        Builtin::Custom => {
            let need = |e: &Option<Expr>, name: &str| {
                e.clone().ok_or_else(|| Error::Config(format!("custom model needs '{name}'")))
            };
            (
                need(&pick(&cfg.b, &p.b), "b")?,
                need(&pick(&cfg.sigma, &p.sigma), "sigma")?,
                need(&pick(&cfg.f, &p.f), "f")?,
                need(&cfg.psi, "psi")?,
            )
        }
        _ => {
            let kernel = match kind {
                Builtin::Example1 => Expr::parse("u")?,
                Builtin::Example2 => Expr::parse("v")?,
                Builtin::Example3 => Expr::parse("u*(1+v)")?,
                Builtin::ArctanRademacher => {
                    let eps = p.eps.unwrap_or(DEFAULT_EPS);
                    if !(eps > 0.0) {
                        return Err(Error::Config("eps must be strictly positive".into()));
                    }
                    Expr::parse(&format!("u*v*({eps:?} + pi/2 + atan(x - y + mean(m)))"))?
                }
                Builtin::Custom => unreachable!(),
            };
            let default_rate =
                if kind == Builtin::ArctanRademacher { "1 + 0.5*tanh(x)" } else { "1" };
            (
                pick(&cfg.b, &p.b).unwrap_or(Expr::parse("-x")?),
                pick(&cfg.sigma, &p.sigma).unwrap_or(Expr::constant(1.0)),
                pick(&cfg.f, &p.f).unwrap_or(Expr::parse(default_rate)?),
                kernel,
            )
        }
    };

    drift.check_vars(&[Var::X], "b")?;
    diffusion.check_vars(&[Var::X], "sigma")?;
    rate.check_vars(&[Var::X], "f")?;
    kernel.check_vars(&[Var::X, Var::Y, Var::U, Var::V], "psi")?;

    let nu1 = p.nu1.as_ref().or(cfg.nu1.as_ref());
    let mark_law = match nu1 {
        Some(v) => parse_mark_law(v)?,
        None if kind == Builtin::Custom => {
            return Err(Error::Config("custom model needs 'nu1'".into()));
        }
        None => NuSpec::rademacher(),
    };
    let initial_law = match p.init.as_ref().or(cfg.init.as_ref()) {
        Some(v) => parse_initial_law(v)?,
        None => InitialLaw::default(),
    };
    let default_bound = (kind == Builtin::ArctanRademacher).then_some(1.5);
    let rate_bound = match p.f_max.or(cfg.f_max) {
        Some(b) => b,
        None if pick(&cfg.f, &p.f).is_none() && default_bound.is_some() => default_bound.unwrap(),
        None => rate.as_constant().ok_or_else(|| {
            Error::Config("f_max is required when f is not constant".into())
        })?,
    };
    validate_rate(&rate, rate_bound)?;

    Ok(ModelSpec::assemble(
        cfg.model.clone(),
        drift,
        diffusion,
        rate,
        kernel,
        mark_law,
        initial_law,
        rate_bound,
        value.clone(),
    ))
}

/// Checks `0 < f ≤ f_max` where this can be decided up front: exactly for a
/// constant rate, on a grid of states otherwise.
fn validate_rate(rate: &Expr, bound: f64) -> Result<()> {
    if let Some(c) = rate.as_constant().filter(|c| !(*c > 0.0)) {
        return Err(Error::Config(format!("rate must be strictly positive (f = {c})")));
    }
    if !(bound > 0.0) || !bound.is_finite() {
        return Err(Error::Config(format!("rate_bound f_max must be positive, got {bound}")));
    }
    let check = |x: f64, value: f64| -> Result<()> {
        if !(value > 0.0) {
            return Err(Error::Config(format!("rate must be strictly positive (f = {value} at x = {x})")));
        }
        if value > bound {
            return Err(Error::Config(format!("rate f = {value} at x = {x} exceeds f_max = {bound}")));
        }
        Ok(())
    };
    if let Some(c) = rate.as_constant() {
        return check(0.0, c);
    }
    let d0 = EmpiricalMeasure1D::dirac(0.0);
    for i in 0..=20 {
        let x = -5.0 + 0.5 * i as f64;
        check(x, rate.eval_state(x, &d0))?;
        check(x, rate.eval_state(x, &EmpiricalMeasure1D::dirac(x)))?;
    }
    Ok(())
}

#[derive(Deserialize)]
#[serde(rename_all = "snake_case")]
enum LawTree {
    Atoms(Vec<(f64, f64)>),
    Normal { mean: f64, std: f64 },
    Uniform { low: f64, high: f64 },
    Point(f64),
}

fn parse_law_tree(v: &Value, what: &str) -> Result<LawTree> {
    if let Some(name) = v.as_str() {
        return match name {
            "rademacher" => Ok(LawTree::Atoms(vec![(-1.0, 0.5), (1.0, 0.5)])),
            "standard_normal" => Ok(LawTree::Normal { mean: 0.0, std: 1.0 }),
            other => Err(Error::Config(format!("{what}: unknown law '{other}'"))),
        };
    }
    serde_json::from_value(v.clone()).map_err(|e| Error::Config(format!("{what}: {e}")))
}

fn continuous(tree: &LawTree, what: &str) -> Result<Option<ContinuousLaw>> {
    Ok(match *tree {
        LawTree::Normal { mean, std } => {
            if !(std > 0.0) {
                return Err(Error::Config(format!("{what}: std must be positive")));
            }
            Some(ContinuousLaw::Normal { mean, std })
        }
        LawTree::Uniform { low, high } => {
            if !(high > low) {
                return Err(Error::Config(format!("{what}: empty uniform range")));
            }
            Some(ContinuousLaw::Uniform { low, high })
        }
        _ => None,
    })
}

/// `"rademacher"`, `{"atoms": [[v, w], ...]}`, `{"normal": {...}}` or `{"uniform": {...}}`.
pub fn parse_mark_law(v: &Value) -> Result<NuSpec> {
    let tree = parse_law_tree(v, "nu1")?;
    if let Some(law) = continuous(&tree, "nu1")? {
        return Ok(NuSpec::Continuous(law));
    }
    match tree {
        LawTree::Atoms(atoms) => NuSpec::discrete(atoms),
        LawTree::Point(_) => Err(Error::Config("nu1: a point mass cannot be centered".into())),
        _ => unreachable!(),
    }
}

/// Like [`parse_mark_law`], plus `{"point": x}`.
pub fn parse_initial_law(v: &Value) -> Result<InitialLaw> {
    let tree = parse_law_tree(v, "init")?;
    if let Some(law) = continuous(&tree, "init")? {
        return Ok(InitialLaw::Continuous(law));
    }
    match tree {
        LawTree::Atoms(atoms) => {
            let atoms: Vec<Atom> = atoms.into_iter().map(|(value, weight)| Atom { value, weight }).collect();
            validate_atoms(&atoms, "init")?;
            Ok(InitialLaw::Discrete(atoms))
        }
        LawTree::Point(x) => Ok(InitialLaw::Point(x)),
        _ => unreachable!(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn builtins_build() {
        for name in ["example1", "example2", "example3", "arctan_rademacher"] {
            let m = ModelSpec::builtin(name).unwrap();
            assert_eq!(m.name, name);
            assert!(m.rate_bound > 0.0);
        }
    }

    #[test]
    fn unknown_model_is_rejected() {
        let err = build_model(&json!({"model": "nope"})).unwrap_err();
        assert!(matches!(err, Error::UnknownModel(_)));
    }

    #[test]
    fn negative_constant_rate_is_rejected() {
        let err = build_model(&json!({"model": "custom", "b": 0, "sigma": 1, "f": -1, "f_max": 1,
                                      "psi": "u*v", "nu1": "rademacher"}))
        .unwrap_err();
        assert!(err.to_string().contains("rate must be strictly positive"), "{err}");
    }

    #[test]
    fn bad_rate_bound_and_malformed_expressions() {
        let bad_bound = build_model(&json!({"model": "example1", "params": {"f_max": 0.0}}));
        assert!(bad_bound.is_err());
        let bad_expr = build_model(&json!({"model": "custom", "b": "x +", "sigma": 1, "f": 1,
                                           "psi": "u", "nu1": "rademacher"}));
        assert!(matches!(bad_expr, Err(Error::Config(_))));
        let wrong_var = build_model(&json!({"model": "custom", "b": "y", "sigma": 1, "f": 1,
                                            "psi": "u", "nu1": "rademacher"}));
        assert!(wrong_var.is_err());
    }

    #[test]
    fn rate_exceeding_bound_is_rejected() {
        let err = build_model(&json!({"model": "example1", "params": {"f": "2 + tanh(x)", "f_max": 2.5}}));
        assert!(err.is_err());
        let ok = build_model(&json!({"model": "example1", "params": {"f": "2 + tanh(x)", "f_max": 3}}));
        assert!(ok.is_ok());
    }

    #[test]
    fn laws_parse() {
        assert_eq!(parse_mark_law(&json!("rademacher")).unwrap(), NuSpec::rademacher());
        assert!(matches!(
            parse_mark_law(&json!({"normal": {"mean": 0, "std": 1}})).unwrap(),
            NuSpec::Continuous(ContinuousLaw::Normal { .. })
        ));
        assert_eq!(parse_initial_law(&json!({"point": 2.0})).unwrap(), InitialLaw::Point(2.0));
        assert!(parse_mark_law(&json!({"atoms": [[1, 0.3]]})).is_err());
    }
}
