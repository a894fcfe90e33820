//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use anyhow::{anyhow, bail, Context, Result};
use nlg_core::grid::{lattice_ratio, make_grid, GridDomain, TestFunction};
use nlg_core::integrands::IntegrandFamily;
use nlg_core::kernels::{make_eps_kernel, make_kernel, KernelSetup};
use nlg_core::minimize::Schedule;
use nlg_core::DEFAULT_SEED;

const KEYS: &[&str] = &[
    "seed",
    "kernel.dim",
    "kernel.rho1",
    "kernel.rho2",
    "kernel.psi",
    "kernel.eta",
    "integrand.family",
    "integrand.m",
    "grid.box",
    "grid.h",
    "grid.h_div",
    "grid.eps",
    "grid.T",
    "field.kind",
    "field.offset",
    "field.slope",
    "field.at",
    "field.jump",
    "field.normal",
    "field.points",
    "field.jumps",
    "limit.tol",
    "trunc.T",
    "trunc.T_max",
    "cell.x",
    "cell.L",
    "cell.zeta",
    "cell.nu",
    "cell.r",
    "cell.s",
    "cell.eps_div",
    "cell.h_div",
    "cell.restarts",
    "cell.anchor_shift",
    "cell.expect",
    "cell.tol",
    "min.instance",
    "min.s",
    "min.restarts",
    "min.gammas",
    "min.max_iter",
    "min.oracle",
    "min.levels",
    "denoise.input",
    "denoise.output",
    "denoise.eps",
    "denoise.tau",
    "denoise.T",
    "denoise.sigma",
    "verify.family",
    "verify.samples",
];

const PARAM_PREFIX: &str = "integrand.params.";

#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Config {
    entries: BTreeMap<String, Entry>,
}

/// Parses `a`, `a/b` or `-a/b`.
pub fn parse_number(s: &str) -> Result<f64> {
    let s = s.trim();
    let v = match s.split_once('/') {
        Some((a, b)) => {
            let a: f64 = a.trim().parse().map_err(|_| anyhow!("not a number: `{s}`"))?;
            let b: f64 = b.trim().parse().map_err(|_| anyhow!("not a number: `{s}`"))?;
            a / b
        }
        None => s.parse().map_err(|_| anyhow!("not a number: `{s}`"))?,
    };
    if !v.is_finite() {
        bail!("not a finite number: `{s}`");
    }
    Ok(v)
}

pub fn parse_list(s: &str) -> Result<Vec<f64>> {
    let s = s.trim().trim_start_matches(['(', '[']).trim_end_matches([')', ']']);
    s.split([',', ';']).filter(|t| !t.trim().is_empty()).map(parse_number).collect()
}

/// `(lo,hi)` or `(lo,hi)x(lo,hi)`.
pub fn parse_box(s: &str) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut lo = Vec::new();
    let mut hi = Vec::new();
    for part in s.split(['x', 'X']) {
        let v = parse_list(part)?;
        if v.len() != 2 {
            bail!("box side `{}` needs two numbers", part.trim());
        }
        lo.push(v[0]);
        hi.push(v[1]);
    }
    if lo.is_empty() || lo.len() > 2 {
        bail!("box must have one or two sides");
    }
    Ok((lo, hi))
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        let mut errors = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let Some((k, v)) = body.split_once('=') else {
                errors.push(format!("line {line}: expected `key = value`"));
                continue;
            };
            let key = k.trim().to_string();
            let value = v.trim().trim_matches('"').to_string();
            if !KEYS.contains(&key.as_str()) && !key.starts_with(PARAM_PREFIX) {
                errors.push(format!("line {line}: unknown key `{key}`"));
                continue;
            }
            if let Some(prev) = entries.get(&key) {
                let prev: &Entry = prev;
                errors.push(format!("line {line}: duplicate key `{key}` (first set on line {})", prev.line));
                continue;
            }
            entries.insert(key, Entry { value, line });
        }
        if !errors.is_empty() {
            bail!("{}", errors.join("\n"));
        }
        let cfg = Self { entries };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("in {}", path.display()))
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|e| e.value.as_str())
    }

    fn at(&self, key: &str) -> String {
        self.entries.get(key).map_or_else(String::new, |e| format!("line {}: ", e.line))
    }

    pub fn number(&self, key: &str) -> Result<Option<f64>> {
        self.get(key).map(|v| parse_number(v).with_context(|| format!("{}{key}", self.at(key)))).transpose()
    }

    pub fn number_or(&self, key: &str, default: f64) -> Result<f64> {
        Ok(self.number(key)?.unwrap_or(default))
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<f64>>> {
        self.get(key).map(|v| parse_list(v).with_context(|| format!("{}{key}", self.at(key)))).transpose()
    }

    pub fn list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>> {
        Ok(self.list(key)?.unwrap_or_else(|| default.to_vec()))
    }

    pub fn count_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.number(key)? {
            None => Ok(default),
            Some(v) if v >= 0.0 && v.fract() == 0.0 => Ok(v as usize),
            Some(v) => bail!("{}{key} must be a non-negative integer, got {v}", self.at(key)),
        }
    }

    pub fn flag(&self, key: &str) -> Result<bool> {
        match self.get(key) {
            None => Ok(false),
            Some("true" | "yes" | "1") => Ok(true),
            Some("false" | "no" | "0") => Ok(false),
            Some(v) => bail!("{}{key} must be true or false, got `{v}`", self.at(key)),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        match self.get("seed") {
            None => Ok(DEFAULT_SEED),
            Some(v) => {
                let v = v.trim();
                let parsed = match v.strip_prefix("0x") {
                    Some(hex) => u64::from_str_radix(hex, 16),
                    None => v.parse(),
                };
                parsed.map_err(|_| anyhow!("{}seed must be an integer, got `{v}`", self.at("seed")))
            }
        }
    }

    pub fn dim(&self) -> Result<usize> {
        if self.get("kernel.dim").is_some() {
            let d = self.count_or("kernel.dim", 1)?;
            if d != 1 && d != 2 {
                bail!("{}kernel.dim must be 1 or 2", self.at("kernel.dim"));
            }
            return Ok(d);
        }
        Ok(self.get("grid.box").map(parse_box).transpose()?.map_or(1, |(lo, _)| lo.len()))
    }

    fn validate(&self) -> Result<()> {
        let mut errors = Vec::new();
        let bx = match self.get("grid.box").map(parse_box).transpose() {
            Ok(b) => b,
            Err(e) => {
                errors.push(format!("{}grid.box: {e}", self.at("grid.box")));
                None
            }
        };
        let h = self.number("grid.h").unwrap_or_else(|e| {
            errors.push(e.to_string());
            None
        });
        if let (Some((lo, hi)), Some(h)) = (&bx, h) {
            if let Err(e) = make_grid(lo, hi, h) {
                errors.push(format!("{}{e}", self.at("grid.h")));
            }
        }
        if let Some(h) = h {
            match self.list("grid.eps") {
                Ok(Some(eps)) => {
                    for e in eps {
                        if let Err(err) = lattice_ratio(e, h) {
                            errors.push(format!("{}{err}", self.at("grid.eps")));
                        }
                    }
                }
                Ok(None) => {}
                Err(e) => errors.push(e.to_string()),
            }
        }
        for key in ["kernel.rho1", "kernel.rho2"] {
            if let Some(spec) = self.get(key) {
                if let Err(e) = make_kernel(spec, self.dim().unwrap_or(1)) {
                    errors.push(format!("{}{key}: {e}", self.at(key)));
                }
            }
        }
        for key in ["kernel.psi", "kernel.eta"] {
            if let Some(spec) = self.get(key) {
                if let Err(e) = make_eps_kernel(spec, self.dim().unwrap_or(1)) {
                    errors.push(format!("{}{key}: {e}", self.at(key)));
                }
            }
        }
        if let Some(f) = self.get("integrand.family") {
            if !["reference", "composite", "arctan", "periodic"].contains(&f) {
                errors.push(format!("{}unknown integrand family `{f}`", self.at("integrand.family")));
            }
        }
        if errors.is_empty() {
            Ok(())
        } else {
            bail!("{}", errors.join("\n"))
        }
    }

    pub fn setup(&self) -> Result<KernelSetup> {
        let d = self.dim()?;
        let rho1 = make_kernel(self.get("kernel.rho1").unwrap_or("box:0.5,1"), d)?;
        let rho2 = match self.get("kernel.rho2") {
            Some(s) => make_kernel(s, d)?,
            None => rho1.clone(),
        };
        if self.get("kernel.psi").is_none() && self.get("kernel.eta").is_none() && self.get("kernel.rho2").is_none() {
            return Ok(KernelSetup::reference(rho1));
        }
        let psi = make_eps_kernel(self.get("kernel.psi").unwrap_or("zero"), d)?;
        let eta = make_eps_kernel(self.get("kernel.eta").unwrap_or("zero"), d)?;
        Ok(KernelSetup::new(rho1, rho2, psi, eta)?)
    }

    pub fn family_name(&self) -> &str {
        self.get("integrand.family").unwrap_or("reference")
    }

    fn param(&self, name: &str, default: f64) -> Result<f64> {
        self.number_or(&format!("{PARAM_PREFIX}{name}"), default)
    }

    fn check_params(&self, allowed: &[&str]) -> Result<()> {
        for (k, e) in &self.entries {
            if let Some(p) = k.strip_prefix(PARAM_PREFIX) {
                if !allowed.contains(&p) {
                    bail!("line {}: parameter `{p}` is not used by family {}", e.line, self.family_name());
                }
            }
        }
        Ok(())
    }

    pub fn family_named(&self, name: &str) -> Result<IntegrandFamily> {
        let setup = self.setup()?;
        let m = self.count_or("integrand.m", 1)?;
        Ok(match name {
            "reference" => {
                self.check_params(&[])?;
                IntegrandFamily::reference(&setup, m)?
            }
            "composite" => {
                self.check_params(&[])?;
                IntegrandFamily::composite(&setup, m)?
            }
            "arctan" => {
                self.check_params(&[])?;
                IntegrandFamily::arctan(&setup.rho1, m)?
            }
            "periodic" => {
                self.check_params(&["lo", "hi"])?;
                IntegrandFamily::periodic(&setup.rho1, self.param("lo", 1.0)?, self.param("hi", 2.0)?, m)?
            }
            other => bail!("unknown integrand family `{other}`"),
        })
    }

    pub fn family(&self) -> Result<IntegrandFamily> {
        self.family_named(self.family_name())
    }

    pub fn grid_box(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        match self.get("grid.box") {
            Some(b) => parse_box(b),
            None => {
                let d = self.dim()?;
                Ok((vec![0.0; d], vec![1.0; d]))
            }
        }
    }

    pub fn eps_list(&self) -> Result<Vec<f64>> {
        self.list_or("grid.eps", &[1.0 / 16.0, 1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0, 1.0 / 256.0])
    }

    /// Spacing for a given ε: `grid.h` when set, else ε / `grid.h_div` (default 8).
    pub fn spacing(&self, eps: f64) -> Result<f64> {
        match self.number("grid.h")? {
            Some(h) => Ok(h),
            None => Ok(eps / self.count_or("grid.h_div", 8)?.max(1) as f64),
        }
    }

    pub fn domain(&self, h: f64) -> Result<Arc<GridDomain>> {
        let (lo, hi) = self.grid_box()?;
        Ok(Arc::new(make_grid(&lo, &hi, h)?))
    }

    pub fn cutoff(&self) -> Result<f64> {
        self.number_or("grid.T", 1.0)
    }

    pub fn field_label(&self) -> &str {
        self.get("field.kind").unwrap_or("affine")
    }

    pub fn test_function(&self) -> Result<TestFunction> {
        let d = self.dim()?;
        let m = self.count_or("integrand.m", 1)?;
        let (lo, hi) = self.grid_box()?;
        let mid: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| 0.5 * (a + b)).collect();
        let mut axis = vec![0.0; d];
        axis[0] = 1.0;
        let offset = self.list_or("field.offset", &vec![0.0; m])?;
        let slope = self.list_or("field.slope", &{
            let mut s = vec![0.0; m * d];
            s[0] = 1.0;
            s
        })?;
        let at = self.list_or("field.at", &mid)?;
        let jump = self.list_or("field.jump", &vec![1.0; m])?;
        let normal = self.list_or("field.normal", &axis)?;
        Ok(match self.field_label() {
            "affine" => TestFunction::affine(&offset, &slope, d),
            "step" => TestFunction::step(&at, &jump, &normal),
            "affine_jump" => TestFunction::affine_with_jump(&offset, &slope, &at, &normal, &jump),
            "staircase" => {
                let points = self.list("field.points")?.ok_or_else(|| anyhow!("staircase needs field.points"))?;
                let jumps = self.list_or("field.jumps", &vec![1.0; points.len()])?;
                TestFunction::staircase(&points, &jumps)?
            }
            other => bail!("{}unknown field kind `{other}`", self.at("field.kind")),
        })
    }

    pub fn schedule(&self) -> Result<Schedule> {
        let base = Schedule::default();
        Ok(Schedule {
            gammas: self.list_or("min.gammas", &base.gammas)?,
            max_iter: self.count_or("min.max_iter", base.max_iter)?,
            rel_tol: base.rel_tol,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_energy_config() {
        let c = Config::parse(
            "# energy\nkernel.rho1 = \"box:0.5,1\"\nintegrand.family = reference\ngrid.box = (0,1)\ngrid.h = 1/128\ngrid.eps = 1/16, 1/32\n",
        )
        .unwrap();
        assert_eq!(c.eps_list().unwrap(), vec![1.0 / 16.0, 1.0 / 32.0]);
        assert_eq!(c.spacing(0.1).unwrap(), 1.0 / 128.0);
        c.family().unwrap();
    }

    #[test]
    fn spacing_must_divide_side() {
        let e = Config::parse("grid.h = 0.3\ngrid.box = (0,1)\n").unwrap_err().to_string();
        assert!(e.contains("spacing does not divide side"), "{e}");
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn duplicate_and_unknown_keys() {
        let e = Config::parse("grid.h = 0.25\ngrid.h = 0.5\n").unwrap_err().to_string();
        assert!(e.contains("line 2: duplicate key"), "{e}");
        let e = Config::parse("\ngrid.spacing = 0.25\n").unwrap_err().to_string();
        assert!(e.contains("line 2: unknown key `grid.spacing`"), "{e}");
        let e = Config::parse("just text\n").unwrap_err().to_string();
        assert!(e.contains("line 1"), "{e}");
    }

    #[test]
    fn eps_must_be_multiple_of_h() {
        assert!(Config::parse("grid.h = 1/64\ngrid.eps = 1/100\n").is_err());
    }

    #[test]
    fn numbers_and_boxes() {
        assert_eq!(parse_number("-1/4").unwrap(), -0.25);
        assert!(parse_number("x").is_err());
        assert_eq!(parse_box("(0,1)x(0,2)").unwrap(), (vec![0.0, 0.0], vec![1.0, 2.0]));
        assert!(parse_box("(0,1,2)").is_err());
    }

    #[test]
    fn periodic_params_are_checked() {
        let c = Config::parse("integrand.family = periodic\nintegrand.params.lo = 1\nintegrand.params.hi = 3\n").unwrap();
        c.family().unwrap();
        let c = Config::parse("integrand.family = reference\nintegrand.params.lo = 1\n").unwrap();
        assert!(c.family().is_err());
    }
}
