//! Scenario files: a TOML document describing one device, an optional swap
//! chain, an optional one-dimensional sweep and the observables to report.
//!
//! Physical values are strings with a unit suffix (`"10 MHz"`, `"4.2 K"`,
//! `"17 mW"`, `"1550 nm"`) or bare numbers in SI base units. Frequencies given
//! in Hz are converted to angular frequency. Two relative units refer to the
//! mechanical frequency: `"0.2 omega_m"` for rates and `"300 /omega_m"` for
//! durations.
//!
//! ```toml
//! name = "peak"
//! outputs = ["en_source", "stability_margin"]
//!
//! [entangler]
//! cavity_length = "1 mm"
//!
//! [entangler.mech]
//! omega_m = "10 MHz"
//! Q_m = 1e7
//! mass = "10 ng"
//! temperature = "4.2 K"
//!
//! [entangler.mode_a]
//! wavelength = "1550 nm"
//! kappa = "0.2 omega_m"
//! detuning = "1 omega_m"
//! power = "17 mW"
//!
//! # mode_b, filter_a, filter_b likewise
//!
//! [sweep]
//! parameter = "entangler.filter_a.center"
//! min = "-2 omega_m"
//! max = "0 omega_m"
//! points = 201
//! ```

use std::fmt::{self, Write as _};
use std::path::Path;

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use toml::{Table, Value};

use crate::entangler::{
    self, output_covariance_with, EntanglerConfig, EntanglerParams, FilterSpec, OpticalDrive,
};
use crate::error::{Error, Result};
use crate::gaussian::{log_negativity, TwoModeGaussianState};
use crate::quadrature::QuadratureOptions;
use crate::relay::{
    concatenate_chain, derive_seed, LossLaw, LossParams, OutcomePolicy, SwapChainConfig,
};
use crate::teleport::{fidelity_bound, optimize_over_rotations};

/// Version string written into result files.
pub const TOOL_VERSION: &str = concat!("cvrelay ", env!("CARGO_PKG_VERSION"));

const TWO_PI: f64 = 2.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dimension {
    Dimensionless,
    AngularFrequency,
    Time,
    Length,
    Mass,
    Temperature,
    Power,
    Attenuation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Scale {
    Factor(f64),
    /// Multiply by `ω_m^power`.
    OmegaM(i32),
}

struct UnitDef {
    symbol: &'static str,
    dim: Dimension,
    scale: Scale,
}

const UNITS: &[UnitDef] = &[
    UnitDef {
        symbol: "",
        dim: Dimension::Dimensionless,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "rad/s",
        dim: Dimension::AngularFrequency,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "Hz",
        dim: Dimension::AngularFrequency,
        scale: Scale::Factor(TWO_PI),
    },
    UnitDef {
        symbol: "kHz",
        dim: Dimension::AngularFrequency,
        scale: Scale::Factor(TWO_PI * 1e3),
    },
    UnitDef {
        symbol: "MHz",
        dim: Dimension::AngularFrequency,
        scale: Scale::Factor(TWO_PI * 1e6),
    },
    UnitDef {
        symbol: "GHz",
        dim: Dimension::AngularFrequency,
        scale: Scale::Factor(TWO_PI * 1e9),
    },
    UnitDef {
        symbol: "omega_m",
        dim: Dimension::AngularFrequency,
        scale: Scale::OmegaM(1),
    },
    UnitDef {
        symbol: "s",
        dim: Dimension::Time,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "ms",
        dim: Dimension::Time,
        scale: Scale::Factor(1e-3),
    },
    UnitDef {
        symbol: "us",
        dim: Dimension::Time,
        scale: Scale::Factor(1e-6),
    },
    UnitDef {
        symbol: "ns",
        dim: Dimension::Time,
        scale: Scale::Factor(1e-9),
    },
    UnitDef {
        symbol: "/omega_m",
        dim: Dimension::Time,
        scale: Scale::OmegaM(-1),
    },
    UnitDef {
        symbol: "m",
        dim: Dimension::Length,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "km",
        dim: Dimension::Length,
        scale: Scale::Factor(1e3),
    },
    UnitDef {
        symbol: "mm",
        dim: Dimension::Length,
        scale: Scale::Factor(1e-3),
    },
    UnitDef {
        symbol: "um",
        dim: Dimension::Length,
        scale: Scale::Factor(1e-6),
    },
    UnitDef {
        symbol: "nm",
        dim: Dimension::Length,
        scale: Scale::Factor(1e-9),
    },
    UnitDef {
        symbol: "kg",
        dim: Dimension::Mass,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "g",
        dim: Dimension::Mass,
        scale: Scale::Factor(1e-3),
    },
    UnitDef {
        symbol: "mg",
        dim: Dimension::Mass,
        scale: Scale::Factor(1e-6),
    },
    UnitDef {
        symbol: "ug",
        dim: Dimension::Mass,
        scale: Scale::Factor(1e-9),
    },
    UnitDef {
        symbol: "ng",
        dim: Dimension::Mass,
        scale: Scale::Factor(1e-12),
    },
    UnitDef {
        symbol: "pg",
        dim: Dimension::Mass,
        scale: Scale::Factor(1e-15),
    },
    UnitDef {
        symbol: "K",
        dim: Dimension::Temperature,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "mK",
        dim: Dimension::Temperature,
        scale: Scale::Factor(1e-3),
    },
    UnitDef {
        symbol: "W",
        dim: Dimension::Power,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "mW",
        dim: Dimension::Power,
        scale: Scale::Factor(1e-3),
    },
    UnitDef {
        symbol: "uW",
        dim: Dimension::Power,
        scale: Scale::Factor(1e-6),
    },
    UnitDef {
        symbol: "dB/km",
        dim: Dimension::Attenuation,
        scale: Scale::Factor(1.0),
    },
    UnitDef {
        symbol: "1/km",
        dim: Dimension::Attenuation,
        scale: Scale::Factor(1.0),
    },
];

/// Base unit assumed for bare numbers of each dimension.
fn base_unit(dim: Dimension) -> &'static str {
    match dim {
        Dimension::Dimensionless => "",
        Dimension::AngularFrequency => "rad/s",
        Dimension::Time => "s",
        Dimension::Length => "m",
        Dimension::Mass => "kg",
        Dimension::Temperature => "K",
        Dimension::Power => "W",
        Dimension::Attenuation => "dB/km",
    }
}

/// A number with its unit, kept symbolic until the mechanical frequency is known.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantity {
    pub value: f64,
    pub unit: String,
}

impl Quantity {
    pub fn new(value: f64, unit: &str) -> Self {
        Self {
            value,
            unit: unit.to_string(),
        }
    }

    fn def(&self) -> &'static UnitDef {
        UNITS
            .iter()
            .find(|u| u.symbol == self.unit)
            .expect("unit validated on parse")
    }

    pub fn dimension(&self) -> Dimension {
        self.def().dim
    }

    /// Converts to SI (angular frequencies in rad/s).
    pub fn resolve(&self, omega_m: f64) -> f64 {
        match self.def().scale {
            Scale::Factor(f) => self.value * f,
            Scale::OmegaM(p) => self.value * omega_m.powi(p),
        }
    }

    fn parse(field: &str, v: &Value, dim: Dimension) -> Result<Self> {
        let q = match v {
            Value::Integer(i) => Quantity::new(*i as f64, base_unit(dim)),
            Value::Float(f) => Quantity::new(*f, base_unit(dim)),
            Value::String(s) => {
                let s = s.trim();
                let (num, unit) = match s.find(char::is_whitespace) {
                    Some(i) => (&s[..i], s[i..].trim()),
                    None => (s, ""),
                };
                let value: f64 = num.parse().map_err(|_| {
                    Error::validation(field, format!("cannot read a number from `{s}`"))
                })?;
                let unit = if unit.is_empty() {
                    base_unit(dim)
                } else {
                    unit
                };
                Quantity::new(value, unit)
            }
            other => {
                return Err(Error::validation(
                    field,
                    format!("expected a number or quantity, got {}", other.type_str()),
                ))
            }
        };
        let Some(def) = UNITS.iter().find(|u| u.symbol == q.unit) else {
            return Err(Error::validation(
                field,
                format!("unknown unit `{}`", q.unit),
            ));
        };
        if def.dim != dim {
            return Err(Error::validation(
                field,
                format!(
                    "unit `{}` has the wrong dimension ({:?} expected)",
                    q.unit, dim
                ),
            ));
        }
        if !q.value.is_finite() {
            return Err(Error::validation(field, "must be finite"));
        }
        Ok(q)
    }

    fn to_toml(&self) -> String {
        if self.unit.is_empty() {
            format!("{:?}", self.value)
        } else {
            format!("\"{:?} {}\"", self.value, self.unit)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MechSpec {
    pub omega_m: Quantity,
    pub q_m: Quantity,
    pub mass: Quantity,
    pub temperature: Quantity,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModeSpec {
    pub wavelength: Quantity,
    pub kappa: Quantity,
    pub detuning: Quantity,
    pub power: Quantity,
    pub effective_coupling: Option<Quantity>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSpecQ {
    pub center: Quantity,
    pub duration: Quantity,
}

/// Device description with unresolved quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct EntanglerSpec {
    pub mech: MechSpec,
    pub cavity_length: Quantity,
    pub mode_a: ModeSpec,
    pub mode_b: ModeSpec,
    pub filter_a: FilterSpecQ,
    pub filter_b: FilterSpecQ,
    pub standard_signs: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainSpec {
    pub links: usize,
    pub eta0: Quantity,
    /// `dB/km` selects the decibel law, `1/km` the exponential law.
    pub alpha: Quantity,
    pub length: Quantity,
    pub end_arm_loss: bool,
    pub sampled_outcomes: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub parameter: String,
    pub min: Quantity,
    pub max: Quantity,
    pub points: usize,
}

impl SweepSpec {
    /// Sweep values in the unit of `min`, endpoints exact.
    pub fn values(&self) -> Vec<f64> {
        let n = self.points;
        (0..n)
            .map(|i| {
                if i + 1 == n {
                    self.max.value
                } else {
                    self.min.value + (self.max.value - self.min.value) * i as f64 / (n - 1) as f64
                }
            })
            .collect()
    }

    /// Header of the sweep column, e.g. `entangler.filter_a.center[omega_m]`.
    pub fn column_name(&self) -> String {
        if self.min.unit.is_empty() {
            self.parameter.clone()
        } else {
            format!("{}[{}]", self.parameter, self.min.unit)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    EnSource,
    EnSwapped,
    EnChain,
    Fidelity,
    FidelityOpt,
    Bound,
    StabilityMargin,
}

impl Observable {
    pub const ALL: [Observable; 7] = [
        Observable::EnSource,
        Observable::EnSwapped,
        Observable::EnChain,
        Observable::Fidelity,
        Observable::FidelityOpt,
        Observable::Bound,
        Observable::StabilityMargin,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Observable::EnSource => "en_source",
            Observable::EnSwapped => "en_swapped",
            Observable::EnChain => "en_chain",
            Observable::Fidelity => "fidelity",
            Observable::FidelityOpt => "fidelity_opt",
            Observable::Bound => "bound",
            Observable::StabilityMargin => "stability_margin",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|o| o.name() == s)
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Which state the fidelity observables are computed on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChannelChoice {
    Source,
    Swap,
    Chain,
}

impl ChannelChoice {
    fn name(&self) -> &'static str {
        match self {
            ChannelChoice::Source => "source",
            ChannelChoice::Swap => "swap",
            ChannelChoice::Chain => "chain",
        }
    }
}

/// A loaded and validated scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub entangler: EntanglerSpec,
    pub chain: Option<ChainSpec>,
    pub sweep: Option<SweepSpec>,
    pub outputs: Vec<Observable>,
    pub channel: ChannelChoice,
    pub quadrature: QuadratureOptions,
    /// The device at the unswept base point, with derived quantities.
    pub base: EntanglerConfig,
}

/// Every path accepted by `sweep.parameter`.
pub const SWEEPABLE: &[&str] = &[
    "entangler.mech.omega_m",
    "entangler.mech.Q_m",
    "entangler.mech.mass",
    "entangler.mech.temperature",
    "entangler.cavity_length",
    "entangler.mode_a.wavelength",
    "entangler.mode_a.kappa",
    "entangler.mode_a.detuning",
    "entangler.mode_a.power",
    "entangler.mode_a.effective_coupling",
    "entangler.mode_b.wavelength",
    "entangler.mode_b.kappa",
    "entangler.mode_b.detuning",
    "entangler.mode_b.power",
    "entangler.mode_b.effective_coupling",
    "entangler.filter_a.center",
    "entangler.filter_a.duration",
    "entangler.filter_b.center",
    "entangler.filter_b.duration",
    "chain.eta0",
    "chain.alpha",
    "chain.length",
];

fn path_dimension(path: &str) -> Option<Dimension> {
    let leaf = path.rsplit('.').next()?;
    Some(match leaf {
        "omega_m" | "kappa" | "detuning" | "effective_coupling" | "center" => {
            Dimension::AngularFrequency
        }
        "Q_m" | "eta0" => Dimension::Dimensionless,
        "mass" => Dimension::Mass,
        "temperature" => Dimension::Temperature,
        "cavity_length" | "wavelength" | "length" => Dimension::Length,
        "power" => Dimension::Power,
        "duration" => Dimension::Time,
        "alpha" => Dimension::Attenuation,
        _ => return None,
    })
}

// ---------------------------------------------------------------- parsing

struct Section<'a> {
    path: String,
    table: &'a Table,
}

impl<'a> Section<'a> {
    fn new(path: &str, table: &'a Table, allowed: &[&str]) -> Result<Self> {
        let mut keys: Vec<&String> = table.keys().collect();
        keys.sort();
        for k in keys {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::UnknownKey { key: join(path, k) });
            }
        }
        Ok(Self {
            path: path.to_string(),
            table,
        })
    }

    fn field(&self, key: &str) -> String {
        join(&self.path, key)
    }

    fn required(&self, key: &str) -> Result<&'a Value> {
        self.table
            .get(key)
            .ok_or_else(|| Error::validation(self.field(key), "missing"))
    }

    fn quantity(&self, key: &str, dim: Dimension) -> Result<Quantity> {
        Quantity::parse(&self.field(key), self.required(key)?, dim)
    }

    fn opt_quantity(&self, key: &str, dim: Dimension) -> Result<Option<Quantity>> {
        self.table
            .get(key)
            .map(|v| Quantity::parse(&self.field(key), v, dim))
            .transpose()
    }

    fn subsection(&self, key: &str, allowed: &[&str]) -> Result<Section<'a>> {
        match self.required(key)? {
            Value::Table(t) => Section::new(&self.field(key), t, allowed),
            _ => Err(Error::validation(self.field(key), "expected a table")),
        }
    }

    fn opt_subsection(&self, key: &str, allowed: &[&str]) -> Result<Option<Section<'a>>> {
        if self.table.contains_key(key) {
            self.subsection(key, allowed).map(Some)
        } else {
            Ok(None)
        }
    }

    fn bool_or(&self, key: &str, default: bool) -> Result<bool> {
        match self.table.get(key) {
            None => Ok(default),
            Some(Value::Boolean(b)) => Ok(*b),
            Some(_) => Err(Error::validation(self.field(key), "expected true or false")),
        }
    }

    fn string(&self, key: &str) -> Result<Option<&'a str>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s)),
            Some(_) => Err(Error::validation(self.field(key), "expected a string")),
        }
    }

    fn count(&self, key: &str) -> Result<Option<usize>> {
        match self.table.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(_) => Err(Error::validation(
                self.field(key),
                "expected a non-negative integer",
            )),
        }
    }
}

fn join(path: &str, key: &str) -> String {
    if path.is_empty() {
        key.to_string()
    } else {
        format!("{path}.{key}")
    }
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

const MODE_KEYS: &[&str] = &[
    "wavelength",
    "kappa",
    "detuning",
    "power",
    "effective_coupling",
];
const FILTER_KEYS: &[&str] = &["center", "duration"];

fn parse_mode(s: &Section<'_>, key: &str) -> Result<ModeSpec> {
    let m = s.subsection(key, MODE_KEYS)?;
    Ok(ModeSpec {
        wavelength: m.quantity("wavelength", Dimension::Length)?,
        kappa: m.quantity("kappa", Dimension::AngularFrequency)?,
        detuning: m.quantity("detuning", Dimension::AngularFrequency)?,
        power: m.quantity("power", Dimension::Power)?,
        effective_coupling: m.opt_quantity("effective_coupling", Dimension::AngularFrequency)?,
    })
}

fn parse_filter(s: &Section<'_>, key: &str) -> Result<FilterSpecQ> {
    let f = s.subsection(key, FILTER_KEYS)?;
    Ok(FilterSpecQ {
        center: f.quantity("center", Dimension::AngularFrequency)?,
        duration: f.quantity("duration", Dimension::Time)?,
    })
}

impl Scenario {
    /// Parses and validates scenario text.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            Error::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        let root = Section::new(
            "",
            &table,
            &[
                "name",
                "outputs",
                "channel",
                "entangler",
                "chain",
                "sweep",
                "numerics",
            ],
        )?;
        let name = root
            .string("name")?
            .ok_or_else(|| Error::validation("name", "missing"))?
            .to_string();

        let ent = root.subsection(
            "entangler",
            &[
                "mech",
                "cavity_length",
                "mode_a",
                "mode_b",
                "filter_a",
                "filter_b",
                "standard_signs",
            ],
        )?;
        let mech = ent.subsection("mech", &["omega_m", "Q_m", "mass", "temperature"])?;
        let entangler = EntanglerSpec {
            mech: MechSpec {
                omega_m: mech.quantity("omega_m", Dimension::AngularFrequency)?,
                q_m: mech.quantity("Q_m", Dimension::Dimensionless)?,
                mass: match mech.opt_quantity("mass", Dimension::Mass)? {
                    Some(q) => q,
                    None => Quantity::new(entangler::DEFAULT_MASS, "kg"),
                },
                temperature: mech.quantity("temperature", Dimension::Temperature)?,
            },
            cavity_length: ent.quantity("cavity_length", Dimension::Length)?,
            mode_a: parse_mode(&ent, "mode_a")?,
            mode_b: parse_mode(&ent, "mode_b")?,
            filter_a: parse_filter(&ent, "filter_a")?,
            filter_b: parse_filter(&ent, "filter_b")?,
            standard_signs: ent.bool_or("standard_signs", true)?,
        };
        if entangler.mech.omega_m.unit == "omega_m" {
            return Err(Error::validation(
                "entangler.mech.omega_m",
                "cannot be given relative to itself",
            ));
        }

        let chain = root
            .opt_subsection(
                "chain",
                &[
                    "links",
                    "eta0",
                    "alpha",
                    "length",
                    "end_arm_loss",
                    "outcomes",
                ],
            )?
            .map(|c| -> Result<ChainSpec> {
                let links = c.count("links")?.unwrap_or(4);
                if links == 0 {
                    return Err(Error::validation("chain.links", "must be at least 1"));
                }
                let sampled = match c.string("outcomes")?.unwrap_or("zero") {
                    "zero" => false,
                    "sampled" => true,
                    other => {
                        return Err(Error::validation(
                            "chain.outcomes",
                            format!("expected `zero` or `sampled`, got `{other}`"),
                        ))
                    }
                };
                Ok(ChainSpec {
                    links,
                    eta0: c
                        .opt_quantity("eta0", Dimension::Dimensionless)?
                        .unwrap_or(Quantity::new(1.0, "")),
                    alpha: c
                        .opt_quantity("alpha", Dimension::Attenuation)?
                        .unwrap_or(Quantity::new(0.0, "dB/km")),
                    length: c
                        .opt_quantity("length", Dimension::Length)?
                        .unwrap_or(Quantity::new(0.0, "km")),
                    end_arm_loss: c.bool_or("end_arm_loss", false)?,
                    sampled_outcomes: sampled,
                })
            })
            .transpose()?;

        let sweep = root
            .opt_subsection("sweep", &["parameter", "min", "max", "points"])?
            .map(|s| -> Result<SweepSpec> {
                let parameter = s
                    .string("parameter")?
                    .ok_or_else(|| Error::validation("sweep.parameter", "missing"))?;
                if !SWEEPABLE.contains(&parameter) {
                    return Err(Error::validation(
                        "sweep.parameter",
                        format!("`{parameter}` is not a numeric field"),
                    ));
                }
                if parameter.starts_with("chain.") && chain.is_none() {
                    return Err(Error::validation(
                        "sweep.parameter",
                        "sweeps a chain field but there is no [chain]",
                    ));
                }
                let dim = path_dimension(parameter).expect("sweepable paths have a dimension");
                let min = s.quantity("min", dim)?;
                let max = s.quantity("max", dim)?;
                if min.unit != max.unit {
                    return Err(Error::validation(
                        "sweep.max",
                        "must use the same unit as sweep.min",
                    ));
                }
                let points = s
                    .count("points")?
                    .ok_or_else(|| Error::validation("sweep.points", "missing"))?;
                if points < 2 {
                    return Err(Error::validation(
                        "sweep.points",
                        "a sweep needs at least 2 points",
                    ));
                }
                Ok(SweepSpec {
                    parameter: parameter.to_string(),
                    min,
                    max,
                    points,
                })
            })
            .transpose()?;

        let outputs = match root.required("outputs")? {
            Value::Array(a) if !a.is_empty() => a
                .iter()
                .map(|v| {
                    v.as_str().and_then(Observable::from_name).ok_or_else(|| {
                        Error::validation("outputs", format!("unknown observable {v}"))
                    })
                })
                .collect::<Result<Vec<_>>>()?,
            _ => {
                return Err(Error::validation(
                    "outputs",
                    "expected a non-empty list of observables",
                ))
            }
        };
        for (i, o) in outputs.iter().enumerate() {
            if outputs[..i].contains(o) {
                return Err(Error::validation(
                    "outputs",
                    format!("`{o}` is listed twice"),
                ));
            }
        }
        let needs_chain = outputs.contains(&Observable::EnChain);
        let channel = match root.string("channel")? {
            None if chain.is_some() => ChannelChoice::Chain,
            None => ChannelChoice::Swap,
            Some("source") => ChannelChoice::Source,
            Some("swap") => ChannelChoice::Swap,
            Some("chain") => ChannelChoice::Chain,
            Some(other) => {
                return Err(Error::validation(
                    "channel",
                    format!("expected source, swap or chain, got `{other}`"),
                ))
            }
        };
        if (needs_chain || channel == ChannelChoice::Chain) && chain.is_none() {
            return Err(Error::validation(
                "chain",
                "required by en_chain or channel = \"chain\"",
            ));
        }

        let mut quadrature = QuadratureOptions::default();
        if let Some(n) = root.opt_subsection("numerics", &["abs_tol", "max_evaluations"])? {
            if let Some(t) = n.opt_quantity("abs_tol", Dimension::Dimensionless)? {
                if !(t.value > 0.0) {
                    return Err(Error::validation("numerics.abs_tol", "must be positive"));
                }
                quadrature.abs_tol = t.value;
            }
            if let Some(m) = n.count("max_evaluations")? {
                quadrature.max_evaluations = m;
            }
        }

        let mut scenario = Scenario {
            name,
            entangler,
            chain,
            sweep,
            outputs,
            channel,
            quadrature,
            base: EntanglerParams::baseline().build()?,
        };
        scenario.base = scenario.entangler_config()?;
        scenario.chain_config()?;
        if let Some(sw) = &scenario.sweep {
            for q in [&sw.min, &sw.max] {
                let point = scenario.with_sweep_value(q.value);
                point.entangler_config()?;
                point.chain_config()?;
            }
        }
        Ok(scenario)
    }

    /// Canonical TOML text; parsing it yields an equal scenario.
    pub fn to_canonical_toml(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "name = {}", toml_string(&self.name));
        let outs: Vec<String> = self.outputs.iter().map(|o| format!("\"{o}\"")).collect();
        let _ = writeln!(s, "outputs = [{}]", outs.join(", "));
        let _ = writeln!(s, "channel = \"{}\"", self.channel.name());
        let e = &self.entangler;
        let _ = writeln!(s, "\n[entangler]");
        let _ = writeln!(s, "cavity_length = {}", e.cavity_length.to_toml());
        let _ = writeln!(s, "standard_signs = {}", e.standard_signs);
        let _ = writeln!(s, "\n[entangler.mech]");
        let _ = writeln!(s, "omega_m = {}", e.mech.omega_m.to_toml());
        let _ = writeln!(s, "Q_m = {}", e.mech.q_m.to_toml());
        let _ = writeln!(s, "mass = {}", e.mech.mass.to_toml());
        let _ = writeln!(s, "temperature = {}", e.mech.temperature.to_toml());
        for (name, m) in [("mode_a", &e.mode_a), ("mode_b", &e.mode_b)] {
            let _ = writeln!(s, "\n[entangler.{name}]");
            let _ = writeln!(s, "wavelength = {}", m.wavelength.to_toml());
            let _ = writeln!(s, "kappa = {}", m.kappa.to_toml());
            let _ = writeln!(s, "detuning = {}", m.detuning.to_toml());
            let _ = writeln!(s, "power = {}", m.power.to_toml());
            if let Some(g) = &m.effective_coupling {
                let _ = writeln!(s, "effective_coupling = {}", g.to_toml());
            }
        }
        for (name, f) in [("filter_a", &e.filter_a), ("filter_b", &e.filter_b)] {
            let _ = writeln!(s, "\n[entangler.{name}]");
            let _ = writeln!(s, "center = {}", f.center.to_toml());
            let _ = writeln!(s, "duration = {}", f.duration.to_toml());
        }
        if let Some(c) = &self.chain {
            let _ = writeln!(s, "\n[chain]");
            let _ = writeln!(s, "links = {}", c.links);
            let _ = writeln!(s, "eta0 = {}", c.eta0.to_toml());
            let _ = writeln!(s, "alpha = {}", c.alpha.to_toml());
            let _ = writeln!(s, "length = {}", c.length.to_toml());
            let _ = writeln!(s, "end_arm_loss = {}", c.end_arm_loss);
            let _ = writeln!(
                s,
                "outcomes = \"{}\"",
                if c.sampled_outcomes {
                    "sampled"
                } else {
                    "zero"
                }
            );
        }
        if let Some(sw) = &self.sweep {
            let _ = writeln!(s, "\n[sweep]");
            let _ = writeln!(s, "parameter = {}", toml_string(&sw.parameter));
            let _ = writeln!(s, "min = {}", sw.min.to_toml());
            let _ = writeln!(s, "max = {}", sw.max.to_toml());
            let _ = writeln!(s, "points = {}", sw.points);
        }
        let _ = writeln!(s, "\n[numerics]");
        let _ = writeln!(s, "abs_tol = {:?}", self.quadrature.abs_tol);
        let _ = writeln!(s, "max_evaluations = {}", self.quadrature.max_evaluations);
        s
    }

    /// SHA-256 of the canonical form, hex encoded.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_canonical_toml().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Number of evaluation points (1 without a sweep).
    pub fn points(&self) -> usize {
        self.sweep.as_ref().map_or(1, |s| s.points)
    }

    fn field_mut(&mut self, path: &str) -> Option<&mut Quantity> {
        fn mode<'a>(m: &'a mut ModeSpec, leaf: &str) -> Option<&'a mut Quantity> {
            match leaf {
                "wavelength" => Some(&mut m.wavelength),
                "kappa" => Some(&mut m.kappa),
                "detuning" => Some(&mut m.detuning),
                "power" => Some(&mut m.power),
                "effective_coupling" => Some(
                    m.effective_coupling
                        .get_or_insert(Quantity::new(0.0, "rad/s")),
                ),
                _ => None,
            }
        }
        fn filter<'a>(f: &'a mut FilterSpecQ, leaf: &str) -> Option<&'a mut Quantity> {
            match leaf {
                "center" => Some(&mut f.center),
                "duration" => Some(&mut f.duration),
                _ => None,
            }
        }
        let (section, leaf) = path.rsplit_once('.')?;
        let e = &mut self.entangler;
        match (section, leaf) {
            ("entangler.mech", "omega_m") => Some(&mut e.mech.omega_m),
            ("entangler.mech", "Q_m") => Some(&mut e.mech.q_m),
            ("entangler.mech", "mass") => Some(&mut e.mech.mass),
            ("entangler.mech", "temperature") => Some(&mut e.mech.temperature),
            ("entangler", "cavity_length") => Some(&mut e.cavity_length),
            ("entangler.mode_a", _) => mode(&mut e.mode_a, leaf),
            ("entangler.mode_b", _) => mode(&mut e.mode_b, leaf),
            ("entangler.filter_a", _) => filter(&mut e.filter_a, leaf),
            ("entangler.filter_b", _) => filter(&mut e.filter_b, leaf),
            ("chain", _) => {
                let c = self.chain.as_mut()?;
                match leaf {
                    "eta0" => Some(&mut c.eta0),
                    "alpha" => Some(&mut c.alpha),
                    "length" => Some(&mut c.length),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// A copy with the sweep parameter set to `value` (in the sweep unit).
    pub fn with_sweep_value(&self, value: f64) -> Scenario {
        let mut s = self.clone();
        if let Some(sw) = &self.sweep {
            let q = Quantity {
                value,
                unit: sw.min.unit.clone(),
            };
            *s.field_mut(&sw.parameter).expect("validated sweep path") = q;
        }
        s
    }

    fn resolve_entangler(&self, e: &EntanglerSpec) -> Result<EntanglerParams> {
        let omega_m = e.mech.omega_m.resolve(f64::NAN);
        let r = |q: &Quantity| q.resolve(omega_m);
        let mode = |m: &ModeSpec| OpticalDrive {
            wavelength: r(&m.wavelength),
            kappa: r(&m.kappa),
            detuning: r(&m.detuning),
            power: r(&m.power),
            effective_coupling: m.effective_coupling.as_ref().map(r),
        };
        let filter = |f: &FilterSpecQ| FilterSpec {
            center: r(&f.center),
            duration: r(&f.duration),
        };
        Ok(EntanglerParams {
            omega_m,
            q_m: r(&e.mech.q_m),
            mass: r(&e.mech.mass),
            temperature: r(&e.mech.temperature),
            mode_a: mode(&e.mode_a),
            mode_b: mode(&e.mode_b),
            cavity_length: r(&e.cavity_length),
            filter_a: filter(&e.filter_a),
            filter_b: filter(&e.filter_b),
            standard_signs: e.standard_signs,
        })
    }

    /// The device at this scenario's (unswept) parameter values.
    pub fn entangler_config(&self) -> Result<EntanglerConfig> {
        self.resolve_entangler(&self.entangler)?
            .build()
            .map_err(in_entangler)
    }

    /// Loss model of the chain section, if any.
    pub fn chain_loss(&self) -> Result<Option<LossParams>> {
        let Some(c) = &self.chain else {
            return Ok(None);
        };
        let law = if c.alpha.unit == "1/km" {
            LossLaw::Exponential
        } else {
            LossLaw::Decibel
        };
        LossParams::new(
            c.eta0.value,
            c.alpha.value,
            c.length.resolve(f64::NAN) / 1e3,
            law,
        )
        .map(Some)
        .map_err(|e| match e {
            Error::Validation { field, message } => Error::Validation {
                field: format!("chain.{field}"),
                message,
            },
            other => other,
        })
    }

    fn chain_config(&self) -> Result<()> {
        self.chain_loss().map(|_| ())
    }
}

fn in_entangler(e: Error) -> Error {
    match e {
        Error::Validation { field, message } => Error::Validation {
            field: format!("entangler.{field}"),
            message,
        },
        other => other,
    }
}

fn toml_string(s: &str) -> String {
    Value::String(s.to_string()).to_string()
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml_str(&text)
}

// ---------------------------------------------------------------- running

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Status {
    Ok,
    Unstable,
    Error(String),
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Status::Ok => f.write_str("ok"),
            Status::Unstable => f.write_str("unstable"),
            Status::Error(code) => write!(f, "error:{code}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    /// Sweep value in the sweep unit (0 without a sweep).
    pub sweep_value: f64,
    /// One entry per requested observable, in order; NaN when not computed.
    pub values: Vec<f64>,
    pub status: Status,
}

/// Options that are not part of the scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub workers: usize,
    /// Base seed for sampled Bell outcomes.
    pub seed: u64,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            workers: 1,
            seed: 0,
        }
    }
}

struct PointOutcome {
    values: Vec<f64>,
    status: Status,
}

fn evaluate_point(scenario: &Scenario, index: usize, seed: u64) -> PointOutcome {
    let n = scenario.outputs.len();
    let mut values = vec![f64::NAN; n];
    let set = |values: &mut Vec<f64>, o: Observable, v: f64| {
        if let Some(i) = scenario.outputs.iter().position(|x| *x == o) {
            values[i] = v;
        }
    };
    let fail = |values: Vec<f64>, e: Error| PointOutcome {
        values,
        status: Status::Error(e.code().to_string()),
    };

    let config = match scenario.entangler_config() {
        Ok(c) => c,
        Err(e) => return fail(values, e),
    };
    let stab = match entangler::stability(&config) {
        Ok(s) => s,
        Err(e) => return fail(values, e),
    };
    set(
        &mut values,
        Observable::StabilityMargin,
        stab.margin(config.mech.omega_m),
    );
    if !stab.stable {
        return PointOutcome {
            values,
            status: Status::Unstable,
        };
    }
    let wants = |o: Observable| scenario.outputs.contains(&o);
    let wants_fidelity =
        wants(Observable::Fidelity) || wants(Observable::FidelityOpt) || wants(Observable::Bound);
    if !(wants(Observable::EnSource)
        || wants(Observable::EnSwapped)
        || wants(Observable::EnChain)
        || wants_fidelity)
    {
        return PointOutcome {
            values,
            status: Status::Ok,
        };
    }

    let result = (|| -> Result<()> {
        let source = TwoModeGaussianState::centered(
            output_covariance_with(&config, &scenario.quadrature)?.cov,
        );
        set(
            &mut values,
            Observable::EnSource,
            log_negativity(&source.cov)?,
        );
        let loss = scenario.chain_loss()?;
        let chain_for = |links: usize| -> Result<SwapChainConfig> {
            let mut cfg = SwapChainConfig::repeated(source, links)?;
            if let (Some(c), Some(l)) = (&scenario.chain, loss) {
                cfg = cfg
                    .with_measured_loss(l)
                    .with_end_loss(c.end_arm_loss.then_some(l))
                    .with_outcome_policy(if c.sampled_outcomes {
                        OutcomePolicy::Sampled {
                            seed: derive_seed(seed, index as u64),
                        }
                    } else {
                        OutcomePolicy::Zero
                    });
            }
            Ok(cfg)
        };
        let needs_swap = wants(Observable::EnSwapped)
            || (wants_fidelity && scenario.channel == ChannelChoice::Swap);
        let swapped = if needs_swap {
            Some(concatenate_chain(&chain_for(2)?)?.state)
        } else {
            None
        };
        if let Some(s) = &swapped {
            set(&mut values, Observable::EnSwapped, log_negativity(&s.cov)?);
        }
        let needs_chain = wants(Observable::EnChain)
            || (wants_fidelity && scenario.channel == ChannelChoice::Chain);
        let chained = if needs_chain {
            let links = scenario.chain.as_ref().map_or(4, |c| c.links);
            Some(concatenate_chain(&chain_for(links)?)?.state)
        } else {
            None
        };
        if let Some(s) = &chained {
            set(&mut values, Observable::EnChain, log_negativity(&s.cov)?);
        }
        if wants_fidelity {
            let channel = match scenario.channel {
                ChannelChoice::Source => source,
                ChannelChoice::Swap => swapped.expect("computed above"),
                ChannelChoice::Chain => chained.expect("computed above"),
            };
            let report = optimize_over_rotations(&channel)?;
            if report.fidelity_optimized > report.bound + 1e-9 {
                return Err(Error::Consistency(format!(
                    "fidelity {} exceeds the entanglement bound {}",
                    report.fidelity_optimized, report.bound
                )));
            }
            set(&mut values, Observable::Fidelity, report.fidelity);
            set(
                &mut values,
                Observable::FidelityOpt,
                report.fidelity_optimized,
            );
            set(
                &mut values,
                Observable::Bound,
                fidelity_bound(report.log_neg),
            );
        }
        Ok(())
    })();
    match result {
        Ok(()) => PointOutcome {
            values,
            status: Status::Ok,
        },
        Err(e) => {
            // Keep only the stability margin so the row carries no partial data.
            for (v, o) in values.iter_mut().zip(&scenario.outputs) {
                if *o != Observable::StabilityMargin {
                    *v = f64::NAN;
                }
            }
            fail(values, e)
        }
    }
}

/// Evaluates every sweep point on a pool of `opts.workers` threads.
///
/// Rows come back in sweep order whatever the scheduling; per-point failures
/// and unstable devices are reported in the row status.
pub fn run_scenario(scenario: &Scenario, opts: &RunOptions) -> Result<Vec<ResultRow>> {
    let values = scenario
        .sweep
        .as_ref()
        .map_or_else(|| vec![0.0], |s| s.values());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.workers.max(1))
        .build()
        .map_err(|e| Error::Io(std::io::Error::other(e)))?;
    let rows = pool.install(|| {
        values
            .par_iter()
            .enumerate()
            .map(|(i, &v)| {
                let point = scenario.with_sweep_value(v);
                let out = evaluate_point(&point, i, opts.seed);
                ResultRow {
                    sweep_value: v,
                    values: out.values,
                    status: out.status,
                }
            })
            .collect::<Vec<_>>()
    });
    Ok(rows)
}

// ---------------------------------------------------------------- output

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    /// Whitespace-separated columns plus a JSON sidecar (`<path>.meta.json`).
    PlotData,
}

fn format_number(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 {
            "inf".into()
        } else {
            "-inf".into()
        }
    } else {
        format!("{x:.11e}")
    }
}

fn sweep_column(scenario: &Scenario) -> String {
    scenario
        .sweep
        .as_ref()
        .map_or_else(|| "point".to_string(), |s| s.column_name())
}

/// Renders rows in the given format (the main file only).
pub fn render_results(
    scenario: &Scenario,
    rows: &[ResultRow],
    opts: &RunOptions,
    format: OutputFormat,
) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# {TOOL_VERSION}");
    let _ = writeln!(
        out,
        "# scenario {} sha256={}",
        scenario.name,
        scenario.hash()
    );
    if scenario.chain.as_ref().is_some_and(|c| c.sampled_outcomes) {
        let _ = writeln!(out, "# seed {}", opts.seed);
    }
    let mut header = vec![sweep_column(scenario)];
    header.extend(scenario.outputs.iter().map(|o| o.name().to_string()));
    header.push("status".into());
    let sep = match format {
        OutputFormat::Csv => ",",
        OutputFormat::PlotData => " ",
    };
    match format {
        OutputFormat::Csv => {
            let _ = writeln!(out, "{}", header.join(sep));
        }
        OutputFormat::PlotData => {
            let _ = writeln!(out, "# {}", header.join(sep));
        }
    }
    for row in rows {
        let mut cells = vec![format_number(row.sweep_value)];
        cells.extend(row.values.iter().map(|&v| format_number(v)));
        cells.push(row.status.to_string());
        let _ = writeln!(out, "{}", cells.join(sep));
    }
    out
}

fn axis_label(o: Observable) -> &'static str {
    match o {
        Observable::EnSource => "E_N (source)",
        Observable::EnSwapped => "E_N (one swap)",
        Observable::EnChain => "E_N (chain)",
        Observable::Fidelity => "F",
        Observable::FidelityOpt => "F (optimized over local rotations)",
        Observable::Bound => "1/(1+exp(-E_N))",
        Observable::StabilityMargin => "-max Re(lambda)/omega_m",
    }
}

/// Metadata sidecar for plot-data output.
pub fn render_metadata(scenario: &Scenario, rows: &[ResultRow]) -> String {
    let x_label = scenario.sweep.as_ref().map_or_else(
        || "point".to_string(),
        |s| {
            if s.min.unit.is_empty() {
                s.parameter.clone()
            } else {
                format!("{} / {}", s.parameter, s.min.unit)
            }
        },
    );
    let columns: Vec<serde_json::Value> = scenario
        .outputs
        .iter()
        .map(|o| serde_json::json!({ "name": o.name(), "label": axis_label(*o) }))
        .collect();
    let meta = serde_json::json!({
        "tool": TOOL_VERSION,
        "scenario": scenario.name,
        "sha256": scenario.hash(),
        "x": { "name": sweep_column(scenario), "label": x_label },
        "columns": columns,
        "rows": rows.len(),
        "channel": scenario.channel.name(),
    });
    let mut s = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    s.push('\n');
    s
}

/// Path of the plot-data metadata sidecar for `path`.
pub fn metadata_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta.json");
    p.into()
}

/// Writes results; refuses empty row sets without touching the file system.
pub fn emit_results(
    scenario: &Scenario,
    rows: &[ResultRow],
    path: &Path,
    format: OutputFormat,
    opts: &RunOptions,
) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::EmptyResults);
    }
    std::fs::write(path, render_results(scenario, rows, opts, format))?;
    if format == OutputFormat::PlotData {
        std::fs::write(metadata_path(path), render_metadata(scenario, rows))?;
    }
    Ok(())
}
