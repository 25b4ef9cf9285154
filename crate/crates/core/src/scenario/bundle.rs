//! A set of model files: SCL documents plus supplementary XML.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::power::StdTypes;
use crate::scl::{
    parse_scl, parse_supplement, CpMapping, ParseError, PlcProgramDoc, PowerParams, ScadaConfig, SclDocument, SclKind,
    SupplementDoc, SupplementKind, Thresholds,
};

/// File name for standard-type overrides inside a bundle directory.
pub const STD_TYPES_FILE: &str = "stdtypes.json";

#[derive(Debug, Error)]
pub enum BundleError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{file}: {error}")]
    Parse { file: String, error: ParseError },
    #[error("{file}: not an SCL or supplementary document")]
    Unrecognized { file: String },
    #[error("{file}: {message}")]
    StdTypes { file: String, message: String },
}

#[derive(Debug, Clone, Default)]
pub struct Bundle {
    pub ssds: Vec<SclDocument>,
    pub seds: Vec<SclDocument>,
    pub scds: Vec<SclDocument>,
    pub icds: Vec<SclDocument>,
    pub supplements: Vec<SupplementDoc>,
    pub std_types: Option<StdTypes>,
}

impl Bundle {
    /// Add one file by name and contents. SCL kinds come from the
    /// extension, supplements from the root element.
    pub fn add_file(&mut self, name: &str, text: &str) -> Result<(), BundleError> {
        let ext = Path::new(name).extension().and_then(|e| e.to_str()).unwrap_or("");
        if name.ends_with(STD_TYPES_FILE) {
            let t = StdTypes::with_overrides(text).map_err(|e| BundleError::StdTypes {
                file: name.to_string(),
                message: e.to_string(),
            })?;
            self.std_types = Some(t);
            return Ok(());
        }
        if let Some(kind) = SclKind::from_extension(ext) {
            let doc = parse_scl(text, kind).map_err(|error| BundleError::Parse {
                file: name.to_string(),
                error,
            })?;
            self.push_scl(doc);
            return Ok(());
        }
        if ext.eq_ignore_ascii_case("xml") {
            let root = crate::xml::parse(text).map_err(|error| BundleError::Parse {
                file: name.to_string(),
                error: error.into(),
            })?;
            let kind = SupplementKind::from_root_name(root.local_name()).ok_or_else(|| BundleError::Unrecognized {
                file: name.to_string(),
            })?;
            let doc = parse_supplement(text, kind).map_err(|error| BundleError::Parse {
                file: name.to_string(),
                error,
            })?;
            self.supplements.push(doc);
            return Ok(());
        }
        Err(BundleError::Unrecognized {
            file: name.to_string(),
        })
    }

    pub fn push_scl(&mut self, doc: SclDocument) {
        match doc.kind {
            SclKind::Ssd => self.ssds.push(doc),
            SclKind::Sed => self.seds.push(doc),
            SclKind::Scd => self.scds.push(doc),
            SclKind::Icd => self.icds.push(doc),
        }
    }

    /// Load every recognized file in `dir` (sorted by name; other files are
    /// skipped).
    pub fn load_dir(dir: &Path) -> Result<Bundle, BundleError> {
        let io_err = |path: &Path| {
            let path = path.to_path_buf();
            move |source| BundleError::Io { path, source }
        };
        let mut entries: Vec<PathBuf> = fs::read_dir(dir)
            .map_err(io_err(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file())
            .collect();
        entries.sort();
        let mut b = Bundle::default();
        for p in entries {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
            let ext = p.extension().and_then(|e| e.to_str()).unwrap_or("");
            let known = SclKind::from_extension(ext).is_some() || ext.eq_ignore_ascii_case("xml") || name == STD_TYPES_FILE;
            if !known {
                continue;
            }
            let text = fs::read_to_string(&p).map_err(io_err(&p))?;
            b.add_file(&name, &text)?;
        }
        Ok(b)
    }

    /// Write the bundle as one file per document.
    pub fn write_dir(&self, dir: &Path) -> Result<Vec<PathBuf>, BundleError> {
        fs::create_dir_all(dir).map_err(|source| BundleError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let mut written = Vec::new();
        let mut put = |name: String, text: String| -> Result<(), BundleError> {
            let path = dir.join(name);
            fs::write(&path, text).map_err(|source| BundleError::Io {
                path: path.clone(),
                source,
            })?;
            written.push(path);
            Ok(())
        };
        for (docs, ext) in [(&self.ssds, "ssd"), (&self.seds, "sed"), (&self.scds, "scd"), (&self.icds, "icd")] {
            for d in docs {
                put(format!("{}.{ext}", d.header.id), d.to_xml())?;
            }
        }
        for s in &self.supplements {
            let name = match s {
                SupplementDoc::PlcProgram(p) => format!("plc_{}.xml", p.name),
                other => format!("{}.xml", other.kind()),
            };
            put(name, s.to_xml())?;
        }
        Ok(written)
    }

    pub fn scl_docs(&self) -> Vec<SclDocument> {
        self.ssds
            .iter()
            .chain(&self.seds)
            .chain(&self.scds)
            .chain(&self.icds)
            .cloned()
            .collect()
    }

    /// All PowerParams documents combined (later entries never override).
    pub fn power_params(&self) -> PowerParams {
        let mut out = PowerParams::default();
        for s in &self.supplements {
            if let SupplementDoc::PowerParams(p) = s {
                if out.base_mva.is_none() {
                    out.base_mva = p.base_mva;
                }
                out.components.extend(p.components.iter().cloned());
            }
        }
        out
    }

    pub fn cp_mapping(&self) -> CpMapping {
        let mut out = CpMapping::default();
        for s in &self.supplements {
            if let SupplementDoc::CpMapping(m) = s {
                out.pairs.extend(m.pairs.iter().cloned());
            }
        }
        out
    }

    pub fn thresholds(&self) -> Thresholds {
        let mut out = Thresholds::default();
        for s in &self.supplements {
            if let SupplementDoc::Thresholds(t) = s {
                out.entries.extend(t.entries.iter().cloned());
            }
        }
        out
    }

    pub fn scada_config(&self) -> Option<ScadaConfig> {
        let mut found = None::<ScadaConfig>;
        for s in &self.supplements {
            if let SupplementDoc::ScadaConfig(c) = s {
                found.get_or_insert_with(ScadaConfig::default).points.extend(c.points.iter().cloned());
            }
        }
        found
    }

    pub fn plc_programs(&self) -> Vec<PlcProgramDoc> {
        self.supplements
            .iter()
            .filter_map(|s| match s {
                SupplementDoc::PlcProgram(p) => Some(p.clone()),
                _ => None,
            })
            .collect()
    }
}
