//! Initial-data documents.

use std::collections::BTreeMap;
use std::path::Path;

use horizon_core::geometry::{Chart, Coordinate, MetricField, Signature, VectorField};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoordSpec {
    name: String,
    min: Option<f64>,
    max: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct DataFile {
    label: String,
    coords: Vec<CoordSpec>,
    #[serde(default)]
    params: BTreeMap<String, f64>,
    sigma: Vec<Vec<String>>,
    #[serde(rename = "V")]
    v: Vec<String>,
}

/// Parsed but not yet validated data.
#[derive(Debug)]
pub struct LoadedData {
    pub label: String,
    pub sigma: MetricField,
    pub v: VectorField,
}

pub fn load(path: &Path) -> Result<LoadedData, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    parse(&text).map_err(|e| match e {
        CliError::Usage(m) => CliError::Usage(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse(text: &str) -> Result<LoadedData, CliError> {
    let file: DataFile = serde_json::from_str(text).map_err(|e| CliError::Usage(e.to_string()))?;
    let coords = file
        .coords
        .iter()
        .map(|c| {
            Coordinate::new(
                c.name.clone(),
                c.min.unwrap_or(f64::NEG_INFINITY),
                c.max.unwrap_or(f64::INFINITY),
            )
        })
        .collect();
    let params = file.params.into_iter().collect();
    let chart = Chart::new(coords, params).map_err(|e| CliError::Usage(e.to_string()))?;

    for (i, row) in file.sigma.iter().enumerate() {
        for (j, src) in row.iter().enumerate() {
            chart
                .parse(src)
                .map_err(|e| CliError::Usage(format!("sigma[{i}][{j}] `{src}`: {e}")))?;
        }
    }
    for (i, src) in file.v.iter().enumerate() {
        chart
            .parse(src)
            .map_err(|e| CliError::Usage(format!("V[{i}] `{src}`: {e}")))?;
    }

    let rows: Vec<Vec<&str>> = file
        .sigma
        .iter()
        .map(|r| r.iter().map(String::as_str).collect())
        .collect();
    let sigma = MetricField::parse(chart.clone(), Signature::Riemannian, &rows)
        .map_err(|e| CliError::Usage(format!("sigma: {e}")))?;
    let components: Vec<&str> = file.v.iter().map(String::as_str).collect();
    let v =
        VectorField::parse(chart, &components).map_err(|e| CliError::Usage(format!("V: {e}")))?;
    Ok(LoadedData {
        label: file.label,
        sigma,
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MISNER: &str = r#"{
        "label": "misner",
        "coords": [{"name": "x", "min": 0, "max": 6.283185307179586},
                   {"name": "y", "min": 0, "max": 6.283185307179586},
                   {"name": "z", "min": 0, "max": 6.283185307179586}],
        "params": {"alpha": -2},
        "sigma": [["alpha^2/4", "0", "0"], ["0", "1", "0"], ["0", "0", "1"]],
        "V": ["1", "0", "0"]
    }"#;

    #[test]
    fn parses_document() {
        let d = parse(MISNER).unwrap();
        assert_eq!(d.label, "misner");
        assert_eq!(d.sigma.dim(), 3);
        assert_eq!(d.sigma.value(&[0.0, 0.0, 0.0]).unwrap()[(0, 0)], 1.0);
    }

    #[test]
    fn reports_expression_position() {
        let bad = MISNER.replace("\"alpha^2/4\"", "\"alpha^2/*4\"");
        match parse(&bad) {
            Err(CliError::Usage(m)) => {
                assert!(m.contains("sigma[0][0]"), "{m}");
                assert!(m.contains("offset 8"), "{m}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_unknown_fields() {
        let bad = MISNER.replace("\"label\"", "\"lable\"");
        assert!(matches!(parse(&bad), Err(CliError::Usage(_))));
    }
}
