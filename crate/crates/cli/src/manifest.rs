//! Manifest assembly: every number is emitted as `{value, units, source}`.

use std::path::Path;

use frontflow::config::ScenarioConfig;
use frontflow::Result;
use serde_json::{json, Map, Value};

/// Units of a manifest entry, looked up by its key.
pub fn units_for(key: &str) -> &'static str {
    match key {
        "T" | "horizon" | "dt" | "cutoff" | "time" | "times" | "sliceTimes" | "extent" | "maxTimeDefect"
        | "start" | "end" | "overshoot" => "time",
        "h" | "spacing" | "halfWidth" | "radius" | "halfSide" | "r0" | "center" | "rho" | "coneRho" | "r"
        | "scale" | "scales" | "coneRhoLadder" | "maxPointToGraph"
        | "maxExteriorExcursion" | "point" | "probe" | "probes" | "width" | "theta" | "wavevector"
        | "coverRadius" => "length",
        "smoothingScales" => "h",
        "perimeter" | "coarea" | "contour" => "length^(N-1)",
        "integratedPerimeter" => "length^(N-1)*time",
        "area" | "k0Measure" => "length^N",
        "A" | "B" | "value" | "minSpeed" | "maxSpeed" => "length/time",
        "kappa" => "temperature*length/time",
        "residual" | "residuals" | "supDifference" | "representationResidual" | "seedDisagreement"
        | "supNorm" | "vStar" | "sigma" | "base" | "amplitude" | "cutoffErrorBound" | "cutoffErrorBounds"
        | "tol" | "worstExcess" | "maxPrincipleExcess" | "v0Max" | "v0Min" | "slope" => "temperature",
        "spaceLogLip" => "temperature/length",
        "spaceHolderHalf" => "temperature/length^(1/2)",
        "timeHolderLog" => "temperature/time^(1/2)",
        "directionHolder" => "1/length^(1/4)",
        _ => "1",
    }
}

pub fn quantity(value: Value, units: &str, source: &str) -> Value {
    json!({"value": value, "units": units, "source": source})
}

fn numeric_array(v: &[Value]) -> bool {
    !v.is_empty() && v.iter().all(|x| x.is_number() || numeric_array_value(x))
}

fn numeric_array_value(v: &Value) -> bool {
    matches!(v, Value::Array(a) if numeric_array(a))
}

/// Wraps every number (and every array of numbers) below `v`.
pub fn annotate(v: Value, source: &str) -> Value {
    annotate_key(v, "", source)
}

fn annotate_key(v: Value, key: &str, source: &str) -> Value {
    match v {
        Value::Number(_) => quantity(v, units_for(key), source),
        Value::Array(a) if numeric_array(&a) => quantity(Value::Array(a), units_for(key), source),
        Value::Array(a) => Value::Array(a.into_iter().map(|x| annotate_key(x, key, source)).collect()),
        Value::Object(m) => {
            let mut out = Map::new();
            for (k, x) in m {
                let y = annotate_key(x, &k, source);
                out.insert(k, y);
            }
            Value::Object(out)
        }
        other => other,
    }
}

/// Header shared by all manifests, followed by the computed results.
pub fn manifest(command: &str, cfg: &ScenarioConfig, seed: u64, results: Value) -> Value {
    let config = serde_json::to_value(cfg).unwrap_or(Value::Null);
    json!({
        "tool": "frontflow",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "scenario": cfg.name,
        "configHash": cfg.hash(),
        "seed": quantity(json!(seed), "1", "configured"),
        "config": annotate(config, "configured"),
        "results": annotate(results, "computed"),
    })
}

pub fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut s = serde_json::to_string_pretty(v)?;
    s.push('\n');
    std::fs::write(path, s)?;
    Ok(())
}

/// Writes a CSV with a header row; numbers use the shortest round-trip form.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut s = header.join(",");
    s.push('\n');
    for r in rows {
        s.push_str(&r.join(","));
        s.push('\n');
    }
    std::fs::write(path, s)?;
    Ok(())
}
