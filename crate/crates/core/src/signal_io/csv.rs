use super::{Annotation, Recording, SignalError};

/// Parses a header-plus-rows CSV (one column per channel, one row per sample).
pub fn parse_csv(text: &str, sample_rate_hz: f64) -> Result<Recording, SignalError> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes());

    let channels: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut samples = vec![Vec::new(); channels.len()];

    for (i, record) in reader.records().enumerate() {
        let record = record?;
        // data rows are numbered from 1, the header is row 0
        let row = i + 1;
        if record.len() != channels.len() {
            return Err(SignalError::RaggedRows {
                row,
                expected: channels.len(),
                found: record.len(),
            });
        }
        for (col, cell) in record.iter().enumerate() {
            let value: f64 = cell.parse().map_err(|_| SignalError::NonNumericCell {
                row,
                col,
                value: cell.to_string(),
            })?;
            if !value.is_finite() {
                return Err(SignalError::NonNumericCell {
                    row,
                    col,
                    value: cell.to_string(),
                });
            }
            samples[col].push(value);
        }
    }

    Recording::new(sample_rate_hz, channels, samples, Vec::new())
}

/// Parses `onset_s,duration_s,label` rows (header required), e.g. events to pair
/// with a CSV recording.
pub fn parse_annotations_csv(text: &str) -> Result<Vec<Annotation>, SignalError> {
    let mut reader = ::csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(::csv::Trim::All)
        .from_reader(text.as_bytes());
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        let row = i + 1;
        if record.len() != 3 {
            return Err(SignalError::RaggedRows {
                row,
                expected: 3,
                found: record.len(),
            });
        }
        let num = |col: usize| -> Result<f64, SignalError> {
            record[col]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite() && *v >= 0.0)
                .ok_or_else(|| SignalError::NonNumericCell {
                    row,
                    col,
                    value: record[col].to_string(),
                })
        };
        out.push(Annotation::new(num(0)?, num(1)?, &record[2]));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two() {
        let rec = parse_csv("C3,C4\n1.0,2.0\n3.0,4.0", 160.0).unwrap();
        assert_eq!(rec.channels(), ["C3", "C4"]);
        assert_eq!(rec.samples(), [vec![1.0, 3.0], vec![2.0, 4.0]]);
        assert!(rec.annotations().is_empty());
    }

    #[test]
    fn annotation_rows() {
        let a = parse_annotations_csv("onset_s,duration_s,label\n0,4.2,T0\n4.2, 4.1 ,T1\n").unwrap();
        assert_eq!(a, vec![Annotation::new(0.0, 4.2, "T0"), Annotation::new(4.2, 4.1, "T1")]);
        assert!(matches!(
            parse_annotations_csv("onset_s,duration_s,label\n-1,1,T1\n"),
            Err(SignalError::NonNumericCell { row: 1, col: 0, .. })
        ));
    }

    #[test]
    fn header_only_is_empty_recording() {
        let rec = parse_csv("C3,C4\n", 160.0).unwrap();
        assert_eq!(rec.channels().len(), 2);
        assert_eq!(rec.n_samples(), 0);
    }

    #[test]
    fn ragged_and_non_numeric() {
        assert!(matches!(
            parse_csv("C3,C4\n1,2\n3\n", 160.0),
            Err(SignalError::RaggedRows { row: 2, expected: 2, found: 1 })
        ));
        assert!(matches!(
            parse_csv("C3,C4\n1,x\n", 160.0),
            Err(SignalError::NonNumericCell { row: 1, col: 1, .. })
        ));
    }

    #[test]
    fn wide_fixture_is_transposed() {
        // independent transpose: build row-major, compare element-wise
        let rows: Vec<Vec<f64>> = (0..320)
            .map(|r| (0..64).map(|c| (r * 64 + c) as f64 * 0.5 - 100.0).collect())
            .collect();
        let mut text = (0..64).map(|c| format!("ch{c}")).collect::<Vec<_>>().join(",");
        text.push('\n');
        for row in &rows {
            text.push_str(&row.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            text.push('\n');
        }
        let rec = parse_csv(&text, 160.0).unwrap();
        assert_eq!(rec.channels().len(), 64);
        assert_eq!(rec.n_samples(), 320);
        for (r, row) in rows.iter().enumerate() {
            for (c, v) in row.iter().enumerate() {
                assert_eq!(rec.samples()[c][r], *v);
            }
        }
    }
}
