//! Model persistence: a human-readable JSON manifest (format_version
//! "SEQLAB/1") plus a sidecar binary of row-major little-endian 64-bit
//! floats at `<path>.bin`. The manifest lists every tensor with its name,
//! shape, and byte offset, in a fixed order, so the round trip is
//! bit-exact and the files are diffable.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::cells::{CellKind, CellParams, GateVariant, GruParams, LstmParams, RnnParams, TensorSet};
use crate::corpus::SeqUnit;
use crate::crf::{CrfModel, FeatureLayout};
use crate::error::{Error, Result};
use crate::model::{ModelConfig, SequenceModel};
use crate::numerics::Matrix;
use crate::vocab::{TagSet, Vocabulary};

pub const FORMAT_VERSION: &str = "SEQLAB/1";

/// Either model family, as stored on disk.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum AnyModel {
    Sequence(SequenceModel),
    Crf(CrfModel),
}

impl AnyModel {
    pub fn arch_name(&self) -> String {
        match self {
            AnyModel::Sequence(m) => m.config.cell_kind.name().to_string(),
            AnyModel::Crf(m) => {
                if m.layout.context {
                    "crf".to_string()
                } else {
                    "crf-nocontext".to_string()
                }
            }
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TensorSpec {
    name: String,
    shape: Vec<usize>,
    offset: u64,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeatureLayoutSpec {
    embed_dim: usize,
    vocab_size: usize,
    context: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    format_version: String,
    cell_kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    variant: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    use_bias: Option<bool>,
    #[serde(skip_serializing_if = "Option::is_none")]
    hidden: Option<usize>,
    embed_dim: usize,
    num_labels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    seq_unit: Option<SeqUnit>,
    vocabulary: Vec<String>,
    tagset: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    feature_layout: Option<FeatureLayoutSpec>,
    binary_file: String,
    tensors: Vec<TensorSpec>,
}

fn binary_path(manifest_path: &Path) -> PathBuf {
    let mut os = manifest_path.as_os_str().to_os_string();
    os.push(".bin");
    PathBuf::from(os)
}

fn binary_file_name(manifest_path: &Path) -> String {
    binary_path(manifest_path)
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "model.bin".to_string())
}

// Tensor shapes for the bidirectional model, in [`SequenceModel::tensors`]
// order. Names follow "<chain>.<gate>.<part>".
fn sequence_tensor_shapes(m: &SequenceModel) -> Vec<Vec<usize>> {
    let (h, d) = (m.hidden(), m.embed_dim());
    let mut shapes = vec![vec![m.vocab.len(), d]];
    for _chain in 0..2 {
        for (name, _) in m.fwd_cell.tensors() {
            shapes.push(if name.ends_with("w_x") {
                vec![h, d]
            } else if name.ends_with("w_h") {
                vec![h, h]
            } else {
                vec![h]
            });
        }
    }
    shapes.push(vec![2 * h, m.num_labels()]);
    shapes
}

fn write_binary(path: &Path, tensors: &[(String, &[f64])]) -> Result<Vec<TensorSpec>> {
    let mut specs = Vec::with_capacity(tensors.len());
    let mut bytes: Vec<u8> = Vec::new();
    for (name, data) in tensors {
        specs.push(TensorSpec {
            name: name.clone(),
            shape: Vec::new(), // filled by the caller
            offset: bytes.len() as u64,
        });
        for v in *data {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(path, bytes)?;
    Ok(specs)
}

/// Saves a model as `<path>` (JSON manifest) plus `<path>.bin`.
pub fn save_model(model: &AnyModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let manifest = match model {
        AnyModel::Sequence(m) => {
            let tensors = m.tensors();
            let mut specs = write_binary(&binary_path(path), &tensors)?;
            for (spec, shape) in specs.iter_mut().zip(sequence_tensor_shapes(m)) {
                spec.shape = shape;
            }
            Manifest {
                format_version: FORMAT_VERSION.to_string(),
                cell_kind: m.config.cell_kind.name().to_string(),
                variant: Some(m.config.variant.name().to_string()),
                use_bias: Some(m.config.use_bias),
                hidden: Some(m.hidden()),
                embed_dim: m.embed_dim(),
                num_labels: m.num_labels(),
                seq_unit: Some(m.config.seq_unit),
                vocabulary: m.vocab.tokens().to_vec(),
                tagset: m.tagset.tags().to_vec(),
                feature_layout: None,
                binary_file: binary_file_name(path),
                tensors: specs,
            }
        }
        AnyModel::Crf(m) => {
            let k = m.num_labels();
            let tensors: Vec<(String, &[f64])> = vec![
                ("feat_embedding".to_string(), m.feat_embedding.as_slice()),
                ("emission".to_string(), m.emission.as_slice()),
                ("transition".to_string(), m.transition.as_slice()),
                ("start".to_string(), m.start.as_slice()),
            ];
            let mut specs = write_binary(&binary_path(path), &tensors)?;
            let shapes = [
                vec![m.vocab.len(), m.layout.embed_dim],
                vec![k, m.layout.len()],
                vec![k, k],
                vec![k],
            ];
            for (spec, shape) in specs.iter_mut().zip(shapes) {
                spec.shape = shape;
            }
            Manifest {
                format_version: FORMAT_VERSION.to_string(),
                cell_kind: "crf".to_string(),
                variant: None,
                use_bias: None,
                hidden: None,
                embed_dim: m.layout.embed_dim,
                num_labels: k,
                seq_unit: None,
                vocabulary: m.vocab.tokens().to_vec(),
                tagset: m.tagset.tags().to_vec(),
                feature_layout: Some(FeatureLayoutSpec {
                    embed_dim: m.layout.embed_dim,
                    vocab_size: m.layout.vocab_size,
                    context: m.layout.context,
                }),
                binary_file: binary_file_name(path),
                tensors: specs,
            }
        }
    };
    let mut json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| Error::contract(format!("manifest serialization failed: {e}")))?;
    json.push('\n');
    fs::write(path, json)?;
    Ok(())
}

fn read_tensor(bytes: &[u8], spec: &TensorSpec) -> Result<Vec<f64>> {
    let len: usize = spec.shape.iter().product();
    let start = spec.offset as usize;
    let end = start + len * 8;
    if end > bytes.len() {
        return Err(Error::data_format(
            0,
            format!("tensor {} overruns the binary sidecar", spec.name),
        ));
    }
    Ok(bytes[start..end]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Loads a model saved by [`save_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<AnyModel> {
    let path = path.as_ref();
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(path)?)
        .map_err(|e| Error::data_format(0, format!("bad manifest: {e}")))?;
    if manifest.format_version != FORMAT_VERSION {
        return Err(Error::data_format(
            0,
            format!("unsupported format_version {:?}", manifest.format_version),
        ));
    }
    let bin = path.parent().map_or_else(
        || PathBuf::from(&manifest.binary_file),
        |dir| dir.join(&manifest.binary_file),
    );
    let bytes = fs::read(bin)?;

    let vocab = Vocabulary::from_token_list(manifest.vocabulary.clone());
    let tagset = TagSet::from_tag_list(manifest.tagset.clone());

    if manifest.cell_kind == "crf" {
        let layout_spec = manifest
            .feature_layout
            .as_ref()
            .ok_or_else(|| Error::data_format(0, "crf manifest lacks feature_layout"))?;
        let layout = FeatureLayout {
            embed_dim: layout_spec.embed_dim,
            vocab_size: layout_spec.vocab_size,
            context: layout_spec.context,
        };
        if layout.vocab_size != vocab.len() {
            return Err(Error::data_format(0, "feature layout vocab size mismatch"));
        }
        let k = manifest.num_labels;
        let mut by_name = std::collections::HashMap::new();
        for spec in &manifest.tensors {
            by_name.insert(spec.name.as_str(), read_tensor(&bytes, spec)?);
        }
        let take = |name: &str| -> Result<Vec<f64>> {
            by_name
                .get(name)
                .cloned()
                .ok_or_else(|| Error::data_format(0, format!("manifest lacks tensor {name}")))
        };
        let model = CrfModel {
            feat_embedding: Matrix::from_vec(vocab.len(), layout.embed_dim, take("feat_embedding")?),
            emission: Matrix::from_vec(k, layout.len(), take("emission")?),
            transition: Matrix::from_vec(k, k, take("transition")?),
            start: take("start")?,
            vocab,
            tagset,
            layout,
        };
        return Ok(AnyModel::Crf(model));
    }

    let cell_kind = match manifest.cell_kind.as_str() {
        "rnn" => CellKind::Rnn,
        "lstm" => CellKind::Lstm,
        "gru" => CellKind::Gru,
        other => {
            return Err(Error::data_format(0, format!("unknown cell kind {other:?}")))
        }
    };
    let variant = match manifest.variant.as_deref() {
        Some("paper") | None => GateVariant::Paper,
        Some("standard") => GateVariant::Standard,
        Some(other) => {
            return Err(Error::data_format(0, format!("unknown variant {other:?}")))
        }
    };
    let use_bias = manifest.use_bias.unwrap_or(false);
    let hidden = manifest
        .hidden
        .ok_or_else(|| Error::data_format(0, "manifest lacks hidden size"))?;
    let dim = manifest.embed_dim;
    let zero_cell = || match cell_kind {
        CellKind::Rnn => CellParams::Rnn(RnnParams::zeros(hidden, dim)),
        CellKind::Lstm => CellParams::Lstm(LstmParams::zeros(hidden, dim, use_bias)),
        CellKind::Gru => CellParams::Gru(GruParams::zeros(hidden, dim)),
    };
    let mut model = SequenceModel {
        embedding: Matrix::zeros(vocab.len(), dim),
        fwd_cell: zero_cell(),
        bwd_cell: zero_cell(),
        softmax_w: Matrix::zeros(2 * hidden, manifest.num_labels),
        vocab,
        tagset,
        config: ModelConfig {
            cell_kind,
            hidden,
            variant,
            use_bias,
            seq_unit: manifest.seq_unit.unwrap_or_default(),
        },
    };

    let mut slots = model.tensors_mut();
    if slots.len() != manifest.tensors.len() {
        return Err(Error::data_format(
            0,
            format!(
                "manifest lists {} tensors, model expects {}",
                manifest.tensors.len(),
                slots.len()
            ),
        ));
    }
    for (spec, (name, slot)) in manifest.tensors.iter().zip(slots.iter_mut()) {
        if &spec.name != name {
            return Err(Error::data_format(
                0,
                format!("tensor order mismatch: {} vs {name}", spec.name),
            ));
        }
        let data = read_tensor(&bytes, spec)?;
        if data.len() != slot.len() {
            return Err(Error::data_format(
                0,
                format!("tensor {name} has wrong size"),
            ));
        }
        slot.copy_from_slice(&data);
    }
    drop(slots);
    Ok(AnyModel::Sequence(model))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{gen_synthetic, SynthProfile};
    use crate::numerics::Rng;

    fn sample_sequence_model(kind: CellKind, use_bias: bool) -> SequenceModel {
        let docs = gen_synthetic(SynthProfile::Local, 6, 9);
        let tokens = docs
            .iter()
            .flat_map(|d| d.sentences.iter())
            .flat_map(|s| s.tokens.iter())
            .map(|t| t.to_lowercase());
        let vocab = Vocabulary::from_tokens(tokens);
        let tagset = TagSet::from_tags(
            docs.iter()
                .flat_map(|d| d.sentences.iter())
                .flat_map(|s| s.tags.iter().cloned()),
        );
        let embedding =
            Matrix::fill_uniform(vocab.len(), 5, -0.5, 0.5, &mut Rng::new(3).substream("e"));
        SequenceModel::init(
            vocab,
            tagset,
            embedding,
            ModelConfig {
                cell_kind: kind,
                hidden: 4,
                use_bias,
                ..Default::default()
            },
            17,
        )
    }

    #[test]
    fn sequence_model_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for (i, kind) in [CellKind::Rnn, CellKind::Lstm, CellKind::Gru].iter().enumerate() {
            for use_bias in [false, true] {
                if use_bias && *kind != CellKind::Lstm {
                    continue;
                }
                let m = sample_sequence_model(*kind, use_bias);
                let path = dir.path().join(format!("m{i}_{use_bias}.seqlab"));
                save_model(&AnyModel::Sequence(m.clone()), &path).unwrap();
                match load_model(&path).unwrap() {
                    AnyModel::Sequence(loaded) => assert_eq!(loaded, m),
                    _ => panic!("wrong model family"),
                }
            }
        }
    }

    #[test]
    fn crf_model_roundtrip_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        for context in [false, true] {
            let docs = gen_synthetic(SynthProfile::Local, 5, 2);
            let mut m = crate::testutil::crf_for_docs(&docs, 4, context, 9);
            // give the weights nonzero content
            let mut rng = Rng::new(8);
            for k in 0..crate::crf::weight_count(&m) {
                crate::crf::set_weight(&mut m, k, rng.uniform(-1.0, 1.0));
            }
            let path = dir.path().join(format!("crf_{context}.seqlab"));
            save_model(&AnyModel::Crf(m.clone()), &path).unwrap();
            match load_model(&path).unwrap() {
                AnyModel::Crf(loaded) => assert_eq!(loaded, m),
                _ => panic!("wrong model family"),
            }
        }
    }

    #[test]
    fn save_is_byte_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_sequence_model(CellKind::Gru, false);
        let p1 = dir.path().join("a.seqlab");
        let p2 = dir.path().join("b.seqlab");
        save_model(&AnyModel::Sequence(m.clone()), &p1).unwrap();
        save_model(&AnyModel::Sequence(m), &p2).unwrap();
        assert_eq!(fs::read(&p1).unwrap().len(), fs::read(&p2).unwrap().len());
        assert_eq!(
            fs::read(binary_path(&p1)).unwrap(),
            fs::read(binary_path(&p2)).unwrap()
        );
    }

    #[test]
    fn rejects_wrong_version_and_garbage() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.seqlab");
        fs::write(&path, "{\"format_version\": \"SEQLAB/999\"}").unwrap();
        assert!(load_model(&path).is_err());
        fs::write(&path, "not json").unwrap();
        assert!(matches!(load_model(&path), Err(Error::DataFormat { .. })));
    }

    #[test]
    fn manifest_is_json_with_expected_fields() {
        let dir = tempfile::tempdir().unwrap();
        let m = sample_sequence_model(CellKind::Lstm, true);
        let path = dir.path().join("m.seqlab");
        save_model(&AnyModel::Sequence(m), &path).unwrap();
        let v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        assert_eq!(v["format_version"], "SEQLAB/1");
        assert_eq!(v["cell_kind"], "lstm");
        assert_eq!(v["use_bias"], true);
        assert!(v["tensors"].as_array().unwrap().len() >= 3);
        assert!(v["tensors"][0]["shape"].is_array());
        assert!(v["tensors"][0]["offset"].is_u64());
    }
}
