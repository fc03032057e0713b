//! JSON model file: `{"format": 1, "config", "labels", "n_trees", "trees"}`
//! with recursively nested trees.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Forest, TrainConfig, TreeNode};
use crate::error::{Error, Result};
use crate::signal::EmotionLabel;

pub const MODEL_FORMAT: u32 = 1;

#[derive(Serialize)]
struct ModelFileRef<'a> {
    format: u32,
    config: &'a TrainConfig,
    labels: &'a [EmotionLabel],
    n_trees: usize,
    trees: &'a [TreeNode],
}

#[derive(Deserialize)]
struct ModelFile {
    format: u32,
    config: TrainConfig,
    labels: Vec<EmotionLabel>,
    n_trees: usize,
    trees: Vec<TreeNode>,
}

impl Forest {
    pub fn to_writer<W: Write>(&self, writer: W) -> Result<()> {
        let file = ModelFileRef {
            format: MODEL_FORMAT,
            config: &self.config,
            labels: &self.labels,
            n_trees: self.trees.len(),
            trees: &self.trees,
        };
        serde_json::to_writer(writer, &file)?;
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.to_writer(&mut buf)?;
        Ok(String::from_utf8(buf).expect("serde_json emits UTF-8"))
    }

    pub fn from_reader<R: Read>(reader: R) -> Result<Forest> {
        let mut de = serde_json::Deserializer::from_reader(reader);
        // Unlimited-depth trees nest far beyond serde_json's default limit.
        de.disable_recursion_limit();
        let file = ModelFile::deserialize(&mut de).map_err(|e| Error::Model(e.to_string()))?;
        de.end().map_err(|e| Error::Model(e.to_string()))?;

        if file.format != MODEL_FORMAT {
            return Err(Error::Model(format!(
                "unsupported format {}, expected {MODEL_FORMAT}",
                file.format
            )));
        }
        file.config.validate()?;
        if file.n_trees != file.config.n_trees || file.trees.len() != file.config.n_trees {
            return Err(Error::Model(format!(
                "config says {} trees, header says {}, file holds {}",
                file.config.n_trees,
                file.n_trees,
                file.trees.len()
            )));
        }
        if file.labels.is_empty() {
            return Err(Error::Model("empty label set".into()));
        }
        for tree in &file.trees {
            tree.validate()?;
        }
        Ok(Forest {
            trees: file.trees,
            config: file.config,
            labels: file.labels,
        })
    }

    pub fn from_json(text: &str) -> Result<Forest> {
        Self::from_reader(text.as_bytes())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        self.to_writer(&mut w)?;
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Forest> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        Self::from_reader(BufReader::new(file))
    }
}
