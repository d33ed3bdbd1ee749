//! Cohort CSV interchange. Columns: id, sex, age, height_cm, weight_kg,
//! bmi, handedness, true_left_ml, true_right_ml. Floats are written in
//! shortest round-trip form, so rewriting a parsed file is byte-identical.

use super::{Handedness, PhantomError, Sex, SubjectRecord};
use std::path::Path;

pub const COHORT_HEADER: [&str; 9] = [
    "id",
    "sex",
    "age",
    "height_cm",
    "weight_kg",
    "bmi",
    "handedness",
    "true_left_ml",
    "true_right_ml",
];

pub fn write_cohort_csv(path: &Path, cohort: &[SubjectRecord]) -> Result<(), PhantomError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(COHORT_HEADER)
        .map_err(|e| PhantomError::Csv(e.to_string()))?;
    for s in cohort {
        w.write_record([
            s.id.as_str(),
            s.sex.as_str(),
            &s.age.to_string(),
            &s.height_cm.to_string(),
            &s.weight_kg.to_string(),
            &s.bmi.to_string(),
            s.handedness.as_str(),
            &s.true_left_ml.to_string(),
            &s.true_right_ml.to_string(),
        ])
        .map_err(|e| PhantomError::Csv(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cohort_csv(path: &Path) -> Result<Vec<SubjectRecord>, PhantomError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r
        .headers()
        .map_err(|e| PhantomError::Csv(e.to_string()))?
        .clone();
    for required in COHORT_HEADER {
        if !headers.iter().any(|h| h == required) {
            return Err(PhantomError::Csv(format!("missing column {required:?}")));
        }
    }
    let col = |name: &str| headers.iter().position(|h| h == name).unwrap();
    let idx = COHORT_HEADER.map(|name| col(name));

    let mut out = Vec::new();
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| PhantomError::Csv(e.to_string()))?;
        let field = |i: usize| -> Result<&str, PhantomError> {
            record
                .get(idx[i])
                .ok_or_else(|| PhantomError::Csv(format!("row {line}: missing field")))
        };
        let parse_f64 = |i: usize| -> Result<f64, PhantomError> {
            field(i)?.parse::<f64>().map_err(|e| {
                PhantomError::Csv(format!("row {line}, column {:?}: {e}", COHORT_HEADER[i]))
            })
        };
        let sex = match field(1)? {
            "female" => Sex::Female,
            "male" => Sex::Male,
            other => {
                return Err(PhantomError::Csv(format!(
                    "row {line}: unknown sex {other:?}"
                )))
            }
        };
        let handedness = match field(6)? {
            "left" => Handedness::Left,
            "right" => Handedness::Right,
            other => {
                return Err(PhantomError::Csv(format!(
                    "row {line}: unknown handedness {other:?}"
                )))
            }
        };
        out.push(SubjectRecord {
            id: field(0)?.to_string(),
            sex,
            age: field(2)?
                .parse()
                .map_err(|e| PhantomError::Csv(format!("row {line}, column age: {e}")))?,
            height_cm: parse_f64(3)?,
            weight_kg: parse_f64(4)?,
            bmi: parse_f64(5)?,
            handedness,
            true_left_ml: parse_f64(7)?,
            true_right_ml: parse_f64(8)?,
        });
    }
    Ok(out)
}

impl From<csv::Error> for PhantomError {
    fn from(e: csv::Error) -> Self {
        PhantomError::Csv(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::super::{sample_cohort, CohortSpec};
    use super::*;

    #[test]
    fn cohort_round_trips_through_csv() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cohort.csv");
        let cohort = sample_cohort(&CohortSpec::new(50, 3)).unwrap();
        write_cohort_csv(&path, &cohort).unwrap();
        let back = read_cohort_csv(&path).unwrap();
        assert_eq!(back, cohort);
    }

    #[test]
    fn rewrite_is_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        let cohort = sample_cohort(&CohortSpec::new(20, 5)).unwrap();
        write_cohort_csv(&a, &cohort).unwrap();
        let back = read_cohort_csv(&a).unwrap();
        write_cohort_csv(&b, &back).unwrap();
        assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn missing_column_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.csv");
        std::fs::write(&path, "id,sex,age\ns00000,male,50\n").unwrap();
        match read_cohort_csv(&path) {
            Err(PhantomError::Csv(msg)) => assert!(msg.contains("height_cm")),
            other => panic!("expected csv error, got {other:?}"),
        }
    }
}
