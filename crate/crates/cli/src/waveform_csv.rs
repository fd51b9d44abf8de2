//! Wide-format waveform CSV: one `time_s` column plus one column per probe.

use std::io::Write;
use std::path::Path;

use transient_bench_core::WaveformSet;

use crate::{CliError, CliResult};

/// Relative spread of time increments accepted as uniform sampling.
const UNIFORM_TOLERANCE: f64 = 1e-6;

/// 15 significant digits, scientific notation.
pub fn format_value(v: f64) -> String {
    format!("{v:.14e}")
}

pub fn write_waveforms<W: Write>(set: &WaveformSet, out: W) -> csv::Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    let mut header = vec!["time_s".to_string()];
    header.extend(set.names().iter().cloned());
    w.write_record(&header)?;
    let columns: Vec<&[f64]> = set.columns().map(|(_, c)| c).collect();
    let mut row = Vec::with_capacity(columns.len() + 1);
    for k in 0..set.len() {
        row.clear();
        row.push(format_value(set.time(k)));
        row.extend(columns.iter().map(|c| format_value(c[k])));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_bytes(set: &WaveformSet) -> Vec<u8> {
    let mut buf = Vec::new();
    write_waveforms(set, &mut buf).expect("writing to memory cannot fail");
    buf
}

/// Reads a waveform CSV back into a uniformly sampled set.
pub fn read_waveforms(path: &Path) -> CliResult<WaveformSet> {
    let mut r = csv::ReaderBuilder::new()
        .from_path(path)
        .map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))?;
    let bad = |msg: String| CliError::usage(format!("{}: {msg}", path.display()));
    let header = r.headers().map_err(|e| bad(e.to_string()))?.clone();
    if header.get(0) != Some("time_s") {
        return Err(bad("first column must be `time_s`".into()));
    }
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    let mut times = Vec::new();
    let mut columns = vec![Vec::new(); names.len()];
    for (line, record) in r.records().enumerate() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        let mut fields = record.iter().map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("row {}: `{f}` is not a number", line + 2)))
        });
        times.push(
            fields
                .next()
                .transpose()?
                .ok_or_else(|| bad("empty row".into()))?,
        );
        for col in columns.iter_mut() {
            col.push(
                fields
                    .next()
                    .transpose()?
                    .ok_or_else(|| bad("short row".into()))?,
            );
        }
    }
    let (t0, dt) = match times.as_slice() {
        [] => return Err(bad("no samples".into())),
        [t] => (*t, 1.0),
        [first, .., last] => {
            let dt = (last - first) / (times.len() - 1) as f64;
            if !(dt > 0.0) {
                return Err(bad("time column must increase".into()));
            }
            if times
                .windows(2)
                .any(|w| ((w[1] - w[0]) - dt).abs() > UNIFORM_TOLERANCE * dt.max(w[1].abs()))
            {
                return Err(bad("time column is not uniformly sampled".into()));
            }
            (*first, dt)
        }
    };
    Ok(WaveformSet::new(dt, t0, names, columns))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> WaveformSet {
        WaveformSet::new(
            1e-6,
            0.0,
            vec!["a".into(), "b".into()],
            vec![vec![0.0, 1.5, -2.25e5], vec![1.0 / 3.0, 0.0, 7.0]],
        )
    }

    #[test]
    fn header_and_layout() {
        let text = String::from_utf8(to_bytes(&sample())).unwrap();
        let lines: Vec<&str> = text.split('\n').collect();
        assert_eq!(lines[0], "time_s,a,b");
        assert_eq!(
            lines[1],
            "0.00000000000000e0,0.00000000000000e0,3.33333333333333e-1"
        );
        assert_eq!(
            lines[3],
            "2.00000000000000e-6,-2.25000000000000e5,7.00000000000000e0"
        );
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[4], "");
        assert!(!text.contains('\r'));
    }

    #[test]
    fn read_back_preserves_values_to_fifteen_digits() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        std::fs::write(&path, to_bytes(&sample())).unwrap();
        let back = read_waveforms(&path).unwrap();
        assert_eq!(back.names(), ["a", "b"]);
        assert!((back.dt() - 1e-6).abs() < 1e-18);
        for (name, col) in sample().columns() {
            for (x, y) in col.iter().zip(back.probe(name).unwrap()) {
                assert!((x - y).abs() <= 1e-14 * x.abs().max(1e-300));
            }
        }
    }

    #[test]
    fn rejects_malformed_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        for text in [
            "t,a\n0,1\n",
            "time_s,a\n",
            "time_s,a\n0,1\n1,x\n",
            "time_s,a\n0,1\n1,2\n3,4\n",
            "time_s,a\n0,1\n1\n",
        ] {
            std::fs::write(&path, text).unwrap();
            let e = read_waveforms(&path).unwrap_err();
            assert_eq!(e.code, crate::EXIT_USAGE, "{text}");
        }
    }
}
