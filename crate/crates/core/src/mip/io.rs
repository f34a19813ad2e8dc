//! JSON instance files.
//!
//! ```text
//! { "name": "...", "sense": "minimize"|"maximize",
//!   "variables": [{"name", "vtype", "lb", "ub"}],
//!   "constraints": [{"name", "lhs", "rhs", "coeffs": {varname: a}}],
//!   "objective": {varname: c} }
//! ```
//!
//! Infinite bounds are the strings `"inf"` / `"-inf"`. Unknown keys are
//! rejected. Floats are written in shortest round-trip form.

use std::collections::HashMap;
use std::path::Path;

use serde_json::{Map, Value};

use super::{validate_instance, Constraint, MipInstance, Sense, VarType, Variable};
use crate::error::{Error, Result};

pub fn read_instance(path: impl AsRef<Path>) -> Result<MipInstance> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_json_str(&text).map_err(|e| match e {
        Error::Parse { context, message } => {
            Error::parse(format!("{}: {context}", path.display()), message)
        }
        other => other,
    })
}

pub fn write_instance(inst: &MipInstance, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = to_json_string(inst)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn bound_value(x: f64) -> Value {
    if x == f64::INFINITY {
        Value::String("inf".into())
    } else if x == f64::NEG_INFINITY {
        Value::String("-inf".into())
    } else {
        number(x)
    }
}

fn number(x: f64) -> Value {
    serde_json::Number::from_f64(x).map(Value::Number).unwrap_or(Value::Null)
}

pub fn to_json_string(inst: &MipInstance) -> Result<String> {
    let violations = validate_instance(inst);
    if !violations.is_empty() {
        return Err(Error::InvalidInstance(violations[0].to_string()));
    }
    let mut root = Map::new();
    root.insert("name".into(), Value::String(inst.name.clone()));
    let sense = match inst.sense {
        Sense::Minimize => "minimize",
        Sense::Maximize => "maximize",
    };
    root.insert("sense".into(), Value::String(sense.into()));
    let vars = inst
        .variables
        .iter()
        .map(|v| {
            let mut m = Map::new();
            m.insert("name".into(), Value::String(v.name.clone()));
            m.insert("vtype".into(), Value::String(v.vtype.as_str().into()));
            m.insert("lb".into(), bound_value(v.lb));
            m.insert("ub".into(), bound_value(v.ub));
            Value::Object(m)
        })
        .collect();
    root.insert("variables".into(), Value::Array(vars));
    let rows = inst
        .constraints
        .iter()
        .map(|r| {
            let mut m = Map::new();
            m.insert("name".into(), Value::String(r.name.clone()));
            m.insert("lhs".into(), bound_value(r.lhs));
            m.insert("rhs".into(), bound_value(r.rhs));
            let coeffs = r
                .coeffs
                .iter()
                .map(|&(j, a)| (inst.variables[j].name.clone(), number(a)))
                .collect();
            m.insert("coeffs".into(), Value::Object(coeffs));
            Value::Object(m)
        })
        .collect();
    root.insert("constraints".into(), Value::Array(rows));
    let obj = inst
        .objective
        .iter()
        .enumerate()
        .filter(|(_, c)| **c != 0.0)
        .map(|(j, &c)| (inst.variables[j].name.clone(), number(c)))
        .collect();
    root.insert("objective".into(), Value::Object(obj));
    let mut text = serde_json::to_string_pretty(&Value::Object(root))
        .map_err(|e| Error::parse("serialize", e.to_string()))?;
    text.push('\n');
    Ok(text)
}

fn check_keys(obj: &Map<String, Value>, allowed: &[&str], ctx: &str) -> Result<()> {
    for k in obj.keys() {
        if !allowed.contains(&k.as_str()) {
            return Err(Error::parse(ctx, format!("unknown key `{k}`")));
        }
    }
    for k in allowed {
        if !obj.contains_key(*k) {
            return Err(Error::parse(ctx, format!("missing key `{k}`")));
        }
    }
    Ok(())
}

fn as_object<'a>(v: &'a Value, ctx: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::parse(ctx, "expected an object"))
}

fn as_str<'a>(v: &'a Value, ctx: &str) -> Result<&'a str> {
    v.as_str().ok_or_else(|| Error::parse(ctx, "expected a string"))
}

fn as_f64(v: &Value, ctx: &str) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::parse(ctx, "expected a number"))
}

fn as_bound(v: &Value, ctx: &str) -> Result<f64> {
    match v {
        Value::String(s) if s == "inf" => Ok(f64::INFINITY),
        Value::String(s) if s == "-inf" => Ok(f64::NEG_INFINITY),
        Value::String(s) => Err(Error::parse(ctx, format!("expected a number, \"inf\" or \"-inf\", got \"{s}\""))),
        _ => as_f64(v, ctx),
    }
}

pub fn from_json_str(text: &str) -> Result<MipInstance> {
    let root: Value = serde_json::from_str(text)
        .map_err(|e| Error::parse(format!("line {} column {}", e.line(), e.column()), e.to_string()))?;
    let root = as_object(&root, "document")?;
    check_keys(root, &["name", "sense", "variables", "constraints", "objective"], "document")?;

    let name = as_str(&root["name"], "name")?.to_string();
    let sense = match as_str(&root["sense"], "sense")? {
        "minimize" => Sense::Minimize,
        "maximize" => Sense::Maximize,
        other => return Err(Error::parse("sense", format!("unknown sense `{other}`"))),
    };

    let vars_json = root["variables"].as_array().ok_or_else(|| Error::parse("variables", "expected an array"))?;
    let mut variables = Vec::with_capacity(vars_json.len());
    for (k, v) in vars_json.iter().enumerate() {
        let ctx = format!("variables[{k}]");
        let obj = as_object(v, &ctx)?;
        check_keys(obj, &["name", "vtype", "lb", "ub"], &ctx)?;
        let vtype = match as_str(&obj["vtype"], &format!("{ctx}.vtype"))? {
            "binary" => VarType::Binary,
            "integer" => VarType::Integer,
            "continuous" => VarType::Continuous,
            other => {
                return Err(Error::parse(
                    format!("{ctx}.vtype"),
                    format!("unknown variable type `{other}` (expected binary, integer or continuous)"),
                ))
            }
        };
        variables.push(Variable {
            name: as_str(&obj["name"], &format!("{ctx}.name"))?.to_string(),
            vtype,
            lb: as_bound(&obj["lb"], &format!("{ctx}.lb"))?,
            ub: as_bound(&obj["ub"], &format!("{ctx}.ub"))?,
        });
    }
    let index: HashMap<&str, usize> = variables.iter().enumerate().map(|(j, v)| (v.name.as_str(), j)).collect();
    if index.len() != variables.len() {
        return Err(Error::parse("variables", "duplicate variable names"));
    }
    let lookup = |name: &str, ctx: &str| -> Result<usize> {
        index.get(name).copied().ok_or_else(|| Error::parse(ctx, format!("unknown variable `{name}`")))
    };

    let rows_json =
        root["constraints"].as_array().ok_or_else(|| Error::parse("constraints", "expected an array"))?;
    let mut constraints = Vec::with_capacity(rows_json.len());
    for (k, r) in rows_json.iter().enumerate() {
        let ctx = format!("constraints[{k}]");
        let obj = as_object(r, &ctx)?;
        check_keys(obj, &["name", "lhs", "rhs", "coeffs"], &ctx)?;
        let cctx = format!("{ctx}.coeffs");
        let mut coeffs = Vec::new();
        for (vname, a) in as_object(&obj["coeffs"], &cctx)? {
            let actx = format!("{cctx}.{vname}");
            coeffs.push((lookup(vname, &actx)?, as_f64(a, &actx)?));
        }
        constraints.push(Constraint::new(
            as_str(&obj["name"], &format!("{ctx}.name"))?,
            coeffs,
            as_bound(&obj["lhs"], &format!("{ctx}.lhs"))?,
            as_bound(&obj["rhs"], &format!("{ctx}.rhs"))?,
        ));
    }

    let mut objective = vec![0.0; variables.len()];
    for (vname, c) in as_object(&root["objective"], "objective")? {
        let ctx = format!("objective.{vname}");
        objective[lookup(vname, &ctx)?] = as_f64(c, &ctx)?;
    }

    let inst = MipInstance { name, sense, variables, constraints, objective };
    if let Some(v) = validate_instance(&inst).first() {
        return Err(Error::InvalidInstance(v.to_string()));
    }
    Ok(inst)
}
