//! Number formatting shared by every on-disk artifact: 17 significant digits
//! in scientific notation, which round-trips f64 exactly, with `inf`/`-inf`
//! spelled out for unbounded interval ends.

pub fn format_f64(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{:.16e}", x)
}

pub fn parse_f64(text: &str) -> Option<f64> {
    let t = text.trim();
    match t {
        "inf" | "+inf" => Some(f64::INFINITY),
        "-inf" => Some(f64::NEG_INFINITY),
        _ => {
            let v: f64 = t.parse().ok()?;
            if v.is_nan() {
                None
            } else {
                Some(v)
            }
        }
    }
}
