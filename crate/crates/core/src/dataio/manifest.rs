//! Stereo-pair manifest CSV.
//!
//! ```text
//! #count,<label>,<n>        optional declared per-label counts
//! left,right,label,location
//! l/0001.ppm,r/0001.ppm,up,genova-pool
//! ```
//!
//! Paths are unquoted and resolved relative to the manifest's directory.
//! The location column is free text and may itself contain commas.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::LabelTaxonomy;
use crate::error::{Error, Result};

const HEADER: &str = "left,right,label,location";

#[derive(Debug, Clone, PartialEq)]
pub struct StereoSample {
    pub left: PathBuf,
    pub right: PathBuf,
    pub label: usize,
    pub location: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    pub taxonomy: LabelTaxonomy,
    pub samples: Vec<StereoSample>,
    pub declared: Option<BTreeMap<String, usize>>,
}

impl Manifest {
    /// Number of samples per taxonomy index.
    pub fn tally(&self) -> Vec<usize> {
        let mut counts = vec![0; self.taxonomy.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Two images per stereo pair.
    pub fn image_count(&self) -> usize {
        2 * self.samples.len()
    }

    pub fn parse(text: &str, taxonomy: &LabelTaxonomy, base: &Path) -> Result<Self> {
        let mut declared: Option<BTreeMap<String, usize>> = None;
        let mut samples = Vec::new();
        let mut seen_header = false;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim_end_matches('\r');
            if line.trim().is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if let Some(decl) = rest.strip_prefix("count,") {
                    let (label, n) = decl.split_once(',').ok_or_else(|| Error::ParseError {
                        line: line_no,
                        msg: "expected #count,<label>,<n>".into(),
                    })?;
                    if taxonomy.index_of(label).is_none() {
                        return Err(Error::UnknownLabel { line: line_no, label: label.into() });
                    }
                    let n = n.trim().parse().map_err(|_| Error::ParseError {
                        line: line_no,
                        msg: format!("bad count {n:?}"),
                    })?;
                    declared.get_or_insert_with(BTreeMap::new).insert(label.to_string(), n);
                }
                continue;
            }
            if !seen_header {
                if line.trim() != HEADER {
                    return Err(Error::ParseError { line: line_no, msg: format!("expected header {HEADER:?}") });
                }
                seen_header = true;
                continue;
            }
            let fields: Vec<&str> = line.splitn(4, ',').collect();
            if fields.len() < 3 || fields[0].is_empty() || fields[1].is_empty() {
                return Err(Error::ParseError { line: line_no, msg: "expected left,right,label[,location]".into() });
            }
            let label = taxonomy
                .index_of(fields[2])
                .ok_or_else(|| Error::UnknownLabel { line: line_no, label: fields[2].into() })?;
            samples.push(StereoSample {
                left: base.join(fields[0]),
                right: base.join(fields[1]),
                label,
                location: fields.get(3).copied().unwrap_or_default().to_string(),
            });
        }
        if !seen_header {
            return Err(Error::ParseError { line: 0, msg: "missing header".into() });
        }
        let manifest = Manifest { taxonomy: taxonomy.clone(), samples, declared };
        if let Some(declared) = &manifest.declared {
            let tally = manifest.tally();
            for (label, &n) in declared {
                let actual = tally[taxonomy.index_of(label).unwrap()];
                if actual != n {
                    return Err(Error::CountMismatch { label: label.clone(), declared: n, actual });
                }
            }
        }
        Ok(manifest)
    }
}

/// Parses and validates a manifest; with `check_files` every referenced image
/// must exist.
pub fn load_manifest(path: impl AsRef<Path>, taxonomy: &LabelTaxonomy, check_files: bool) -> Result<Manifest> {
    let path = path.as_ref();
    let text = fs::read_to_string(path)?;
    let base = path.parent().unwrap_or(Path::new(""));
    let manifest = Manifest::parse(&text, taxonomy, base)?;
    if check_files {
        for s in &manifest.samples {
            for p in [&s.left, &s.right] {
                if !p.exists() {
                    return Err(Error::MissingFile(p.clone()));
                }
            }
        }
    }
    Ok(manifest)
}

/// Writes a manifest with paths relative to `path`'s directory when possible.
pub fn write_manifest(path: impl AsRef<Path>, manifest: &Manifest) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new(""));
    let rel = |p: &Path| p.strip_prefix(base).unwrap_or(p).to_string_lossy().into_owned();
    let mut out = String::new();
    if let Some(declared) = &manifest.declared {
        for (label, n) in declared {
            writeln!(out, "#count,{label},{n}").unwrap();
        }
    }
    out.push_str(HEADER);
    out.push('\n');
    for s in &manifest.samples {
        writeln!(out, "{},{},{},{}", rel(&s.left), rel(&s.right), manifest.taxonomy.name(s.label), s.location).unwrap();
    }
    fs::write(path, out)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn caddy() -> LabelTaxonomy {
        LabelTaxonomy::caddy()
    }

    #[test]
    fn three_rows() {
        let text = "left,right,label,location\na.ppm,b.ppm,up,pool\nc.ppm,d.ppm,null,sea, near buoy\ne.ppm,f.ppm,free-swim\n";
        let m = Manifest::parse(text, &caddy(), Path::new("data")).unwrap();
        assert_eq!(m.samples.len(), 3);
        assert_eq!(m.samples[0].left, Path::new("data/a.ppm"));
        assert_eq!(m.samples[1].location, "sea, near buoy");
        assert_eq!(m.samples[2].label, 18);
    }

    #[test]
    fn unknown_label_reports_line() {
        let text = "left,right,label,location\na,b,up,x\na,b,jump,x\n";
        match Manifest::parse(text, &caddy(), Path::new("")) {
            Err(Error::UnknownLabel { line, label }) => assert_eq!((line, label.as_str()), (3, "jump")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_rows() {
        assert!(matches!(Manifest::parse("left,right\n", &caddy(), Path::new("")), Err(Error::ParseError { line: 1, .. })));
        assert!(matches!(
            Manifest::parse("left,right,label,location\nonly-one\n", &caddy(), Path::new("")),
            Err(Error::ParseError { line: 2, .. })
        ));
    }

    #[test]
    fn declared_counts_must_match() {
        let text = "#count,up,2\nleft,right,label,location\na,b,up,x\n";
        assert!(matches!(
            Manifest::parse(text, &caddy(), Path::new("")),
            Err(Error::CountMismatch { declared: 2, actual: 1, .. })
        ));
    }

    #[test]
    fn caddy_sized_manifest() {
        // 9239 gesture pairs, 12708 pose pairs, 7190 null pairs
        let tax = caddy();
        let mut text = String::new();
        let mut counts = vec![0usize; 20];
        let spread = |total: usize, parts: usize, k: usize| total / parts + usize::from(k < total % parts);
        for k in 0..16 {
            counts[k] = spread(9239, 16, k);
        }
        for k in 0..3 {
            counts[16 + k] = spread(12708, 3, k);
        }
        counts[19] = 7190;
        for (k, n) in counts.iter().enumerate() {
            writeln!(text, "#count,{},{n}", tax.name(k)).unwrap();
        }
        text.push_str(HEADER);
        text.push('\n');
        for (k, &n) in counts.iter().enumerate() {
            for s in 0..n {
                writeln!(text, "L/{k}_{s}.ppm,R/{k}_{s}.ppm,{},biograd", tax.name(k)).unwrap();
            }
        }
        let m = Manifest::parse(&text, &tax, Path::new("")).unwrap();
        assert_eq!(m.samples.len(), 9239 + 12708 + 7190);
        assert_eq!(m.image_count(), 58274);
        assert_eq!(m.tally(), counts);
    }

    #[test]
    fn write_then_load() {
        let dir = tempfile::tempdir().unwrap();
        let tax = caddy();
        let m = Manifest {
            taxonomy: tax.clone(),
            samples: vec![StereoSample {
                left: dir.path().join("l.ppm"),
                right: dir.path().join("r.ppm"),
                label: 4,
                location: "pool".into(),
            }],
            declared: Some(BTreeMap::from([("take-photo".to_string(), 1)])),
        };
        let path = dir.path().join("manifest.csv");
        write_manifest(&path, &m).unwrap();
        assert_eq!(load_manifest(&path, &tax, false).unwrap(), m);
        assert!(matches!(load_manifest(&path, &tax, true), Err(Error::MissingFile(_))));
    }
}
