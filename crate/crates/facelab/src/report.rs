//! CSV output for error reports and threshold sweeps.

use std::io::Write;

use facelab_core::eval::{ErrorReport, SweepPoint};

use crate::error::Result;

/// One row per probe: `path,truth,prediction,score,correct`.
pub fn write_report<W: Write>(report: &ErrorReport, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["path", "truth", "prediction", "score", "correct"])?;
    for r in &report.records {
        w.write_record([
            r.path.as_str(),
            r.truth.as_str(),
            r.prediction.as_str(),
            &r.score.to_string(),
            if r.correct { "1" } else { "0" },
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn summary(report: &ErrorReport) -> String {
    format!(
        "method={} split={} images={} errors={} error_rate={}",
        report.method,
        report.split,
        report.records.len(),
        report.errors(),
        report.error_rate
    )
}

/// `theta,false_accept,false_reject`.
pub fn write_sweep<W: Write>(curve: &[SweepPoint], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["theta", "false_accept", "false_reject"])?;
    for p in curve {
        w.write_record([p.theta.to_string(), p.false_accept.to_string(), p.false_reject.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use facelab_core::eval::Record;

    #[test]
    fn report_csv_layout() {
        let report = ErrorReport {
            method: "eigen".into(),
            split: "all".into(),
            error_rate: 0.5,
            confusion: Default::default(),
            records: vec![
                Record { path: "a/1.pgm".into(), truth: "a".into(), prediction: "a".into(), score: 0.25, correct: true },
                Record { path: "b,1.pgm".into(), truth: "b".into(), prediction: "unknown".into(), score: 3.0, correct: false },
            ],
        };
        let mut buf = Vec::new();
        write_report(&report, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "path,truth,prediction,score,correct\na/1.pgm,a,a,0.25,1\n\"b,1.pgm\",b,unknown,3,0\n");
        assert!(summary(&report).contains("error_rate=0.5"));
    }
}
