//! Tabular output: number formatting and CSV serialization.

/// Scientific notation with 12 significant digits and a signed two-digit
/// exponent, e.g. `1.06066017178e+00`. Non-finite values print as `inf`,
/// `-inf` or `nan`.
pub fn sci(x: f64) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let raw = format!("{x:.11e}");
    let (mantissa, exponent) = raw.split_once('e').expect("exponent marker");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    let sign = if exponent < 0 { '-' } else { '+' };
    format!("{mantissa}e{sign}{:02}", exponent.abs())
}

/// CSV table with a header row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        assert_eq!(row.len(), self.header.len(), "row width must match the header");
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<String, csv::Error> {
        let mut writer = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(Vec::new());
        writer.write_record(&self.header)?;
        for row in &self.rows {
            writer.write_record(row)?;
        }
        let bytes = writer.into_inner().map_err(|e| e.into_error())?;
        Ok(String::from_utf8(bytes).expect("CSV fields are UTF-8"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scientific_format() {
        assert_eq!(sci(1.0606601717798212), "1.06066017178e+00");
        assert_eq!(sci(-0.000123), "-1.23000000000e-04");
        assert_eq!(sci(0.0), "0.00000000000e+00");
        assert_eq!(sci(6.02e23), "6.02000000000e+23");
        assert_eq!(sci(1e-300), "1.00000000000e-300");
        assert_eq!(sci(f64::INFINITY), "inf");
        assert_eq!(sci(f64::NEG_INFINITY), "-inf");
        assert_eq!(sci(f64::NAN), "nan");
    }

    #[test]
    fn csv_layout() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), String::new()]);
        t.push(vec!["x,y".into(), "2".into()]);
        assert_eq!(t.to_csv().unwrap(), "a,b\n1,\n\"x,y\",2\n");
    }

    proptest::proptest! {
        #[test]
        fn scientific_round_trip(x in proptest::num::f64::NORMAL) {
            let text = sci(x);
            let back: f64 = text.parse().unwrap();
            proptest::prop_assert!((back - x).abs() <= 5e-12 * x.abs());
            let mantissa = text.split_once('e').unwrap().0.trim_start_matches('-');
            proptest::prop_assert_eq!(mantissa.len(), 13);
        }
    }

    #[test]
    #[should_panic]
    fn width_mismatch_panics() {
        Table::new(&["a"]).push(vec![]);
    }
}
