//! Dispatch policy files: UTF-8 `key = value` lines, `#` starts a comment.
//!
//! ```text
//! tau_illum = 2.05
//! tau_pose = 1667.0
//! tau_occl = 0.1
//! default_method = eigen
//! frontal_ref = s01/003.pgm
//! ```

use std::fs;
use std::path::Path;

use facelab_core::{DispatchPolicy, MethodId};

use crate::error::{Error, Result};
use crate::fsio::write_atomic;

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyFile {
    pub policy: DispatchPolicy,
    /// Dataset-relative path of the reference frontal face, if recorded.
    pub frontal_ref: Option<String>,
}

fn threshold(line: usize, key: &str, value: &str) -> Result<f64> {
    let v: f64 = value
        .parse()
        .map_err(|_| Error::Policy { line, message: format!("{key}: {value:?} is not a number") })?;
    if v.is_nan() || v < 0.0 {
        return Err(Error::Policy { line, message: format!("{key} must be non-negative") });
    }
    Ok(v)
}

/// Keys left out keep their default values.
pub fn parse(text: &str) -> Result<PolicyFile> {
    let mut policy = DispatchPolicy::default();
    let mut frontal_ref = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| Error::Policy { line, message: format!("expected key = value, got {content:?}") })?;
        let (key, value) = (key.trim(), value.trim());
        match key {
            "tau_illum" => policy.tau_illum = threshold(line, key, value)?,
            "tau_pose" => policy.tau_pose = threshold(line, key, value)?,
            "tau_occl" => policy.tau_occl = threshold(line, key, value)?,
            "default_method" => {
                policy.default_method = value
                    .parse::<MethodId>()
                    .map_err(|e| Error::Policy { line, message: e.to_string() })?
            }
            "frontal_ref" => frontal_ref = Some(value.to_string()),
            other => return Err(Error::Policy { line, message: format!("unknown key {other:?}") }),
        }
    }
    Ok(PolicyFile { policy, frontal_ref })
}

pub fn render(file: &PolicyFile) -> String {
    let p = &file.policy;
    let mut out = format!(
        "tau_illum = {}\ntau_pose = {}\ntau_occl = {}\ndefault_method = {}\n",
        p.tau_illum, p.tau_pose, p.tau_occl, p.default_method
    );
    if let Some(f) = &file.frontal_ref {
        out.push_str(&format!("frontal_ref = {f}\n"));
    }
    out
}

pub fn load(path: &Path) -> Result<PolicyFile> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text)
}

pub fn save(path: &Path, file: &PolicyFile) -> Result<()> {
    write_atomic(path, render(file).as_bytes())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_render_round_trip() {
        let text = "# calibrated\ntau_illum = 2.5\ntau_pose=10 # pose\ntau_occl = 0.1\ndefault_method = hmm\nfrontal_ref = a/1.pgm\n";
        let f = parse(text).unwrap();
        assert_eq!(f.policy.tau_illum, 2.5);
        assert_eq!(f.policy.tau_pose, 10.0);
        assert_eq!(f.policy.default_method, MethodId::Hmm);
        assert_eq!(f.frontal_ref.as_deref(), Some("a/1.pgm"));
        assert_eq!(parse(&render(&f)).unwrap(), f);
    }

    #[test]
    fn infinite_threshold_allowed() {
        let f = parse("tau_pose = inf").unwrap();
        assert_eq!(f.policy.tau_pose, f64::INFINITY);
        assert_eq!(parse(&render(&f)).unwrap(), f);
    }

    #[test]
    fn errors_name_the_line() {
        let err = parse("tau_illum = 1\nbogus = 2").unwrap_err();
        assert!(matches!(err, Error::Policy { line: 2, .. }));
        assert!(parse("tau_occl = -1").is_err());
        assert!(parse("tau_pose").is_err());
        assert!(parse("default_method = lda").is_err());
    }
}
