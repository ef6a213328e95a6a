//! JSON file formats. Matrices are stored as arrays of rows.

use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::Result;

pub mod matrix_rows {
    use ndarray::Array2;
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Array2<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.rows().into_iter().map(|r| r.to_vec()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Array2<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        let n = rows.len();
        let m = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != m) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        let flat: Vec<f64> = rows.into_iter().flatten().collect();
        Array2::from_shape_vec((n, m), flat).map_err(D::Error::custom)
    }
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use crate::model::{sample_measurement_matrix, synthesize, NoiseModel, SblInstance, SignalPrior, StudentTPrior};

    #[test]
    fn instance_json_field_names() {
        let phi = sample_measurement_matrix(3, 4, 1).unwrap();
        let prior = SignalPrior::StudentT(StudentTPrior::new(3.0, 1.0).unwrap());
        let inst = synthesize(&phi, &prior, &NoiseModel::KnownVariance { xi: 0.5 }, 2, 9).unwrap();
        let v: serde_json::Value = serde_json::to_value(&inst).unwrap();
        let obj = v.as_object().unwrap();
        let mut keys: Vec<&str> = obj.keys().map(String::as_str).collect();
        keys.sort();
        assert_eq!(keys, ["gamma_true", "observations", "phi", "seed", "x_true", "xi_true"]);
        assert_eq!(obj["phi"].as_array().unwrap().len(), 3);
        assert_eq!(obj["x_true"].as_array().unwrap()[0].as_array().unwrap().len(), 2);
        let back: SblInstance = serde_json::from_value(v).unwrap();
        assert_eq!(back, inst);
    }

    #[test]
    fn ragged_rows_rejected() {
        let text = r#"{"phi": [[1.0, 2.0], [3.0]], "gamma_true": null, "x_true": [[1.0]], "xi_true": 1.0, "observations": [[1.0]], "seed": 0}"#;
        assert!(serde_json::from_str::<SblInstance>(text).is_err());
    }
}
