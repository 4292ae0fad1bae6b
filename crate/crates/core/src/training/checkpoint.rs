//! Binary checkpoint format.
//!
//! Layout, all integers little-endian u32, all floats little-endian f64 in
//! row-major order:
//!
//! ```text
//! magic "RNCRF\x01"
//! d  |L|  T  feature_dim  relation_count  vocab_size
//! label table, relation table, vocabulary  (length-prefixed UTF-8 strings)
//! W_v   relation matrices (by id)   b   W_e
//! W_0   W_{-T} … W_{-1}   W_{+1} … W_{+T}   V
//! ```
//!
//! Round-trips are bit-exact. The train mode and feature resources are not
//! part of the stream; the feature flags are recovered from `feature_dim`
//! (block sizes 15/2/1 decompose uniquely) and the label table fixes the
//! label mode.

use super::{FeatureResources, Model, TrainConfig, TrainMode};
use crate::corpus::{EmbeddingMatrix, LabelMode, Vocabulary};
use crate::crf::{TransitionMatrix, UnaryWeights};
use crate::dtrnn::{DtrnnParams, RelationTable};
use crate::error::Error;
use crate::features::FeatureConfig;
use crate::Result;
use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use ndarray::{Array1, Array2};
use std::io::{BufReader, BufWriter, Read, Write};

/// Leading magic bytes, version included.
pub const CHECKPOINT_MAGIC: &[u8; 6] = b"RNCRF\x01";

fn truncated(what: &str) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| {
        if e.kind() == std::io::ErrorKind::UnexpectedEof {
            Error::Checkpoint(format!("truncated stream while reading {what}"))
        } else {
            Error::Io(e)
        }
    }
}

fn write_string<W: Write>(writer: &mut W, s: &str) -> Result<()> {
    writer.write_u32::<LittleEndian>(s.len() as u32)?;
    writer.write_all(s.as_bytes())?;
    Ok(())
}

fn read_string<R: Read>(reader: &mut R, what: &str) -> Result<String> {
    let len = reader.read_u32::<LittleEndian>().map_err(truncated(what))? as usize;
    if len > 1 << 24 {
        return Err(Error::Checkpoint(format!(
            "implausible string length {len} in {what}"
        )));
    }
    let mut buf = vec![0u8; len];
    reader.read_exact(&mut buf).map_err(truncated(what))?;
    String::from_utf8(buf)
        .map_err(|_| Error::Checkpoint(format!("invalid UTF-8 in {what}")))
}

fn write_matrix<W: Write>(writer: &mut W, values: impl Iterator<Item = f64>) -> Result<()> {
    for value in values {
        writer.write_f64::<LittleEndian>(value)?;
    }
    Ok(())
}

fn read_matrix<R: Read>(reader: &mut R, rows: usize, cols: usize, what: &str) -> Result<Array2<f64>> {
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows * cols {
        data.push(reader.read_f64::<LittleEndian>().map_err(truncated(what))?);
    }
    Array2::from_shape_vec((rows, cols), data)
        .map_err(|e| Error::Checkpoint(format!("bad shape for {what}: {e}")))
}

fn read_vector<R: Read>(reader: &mut R, len: usize, what: &str) -> Result<Array1<f64>> {
    let mut data = Vec::with_capacity(len);
    for _ in 0..len {
        data.push(reader.read_f64::<LittleEndian>().map_err(truncated(what))?);
    }
    Ok(Array1::from(data))
}

/// Serialize a model; the stream is self-contained for tagging except for
/// feature resources, which travel in their own text formats.
pub fn save_checkpoint<W: Write>(model: &Model, writer: W) -> Result<()> {
    model.validate_dimensions()?;
    let mut writer = BufWriter::new(writer);
    writer.write_all(CHECKPOINT_MAGIC)?;
    let header = [
        model.dim(),
        model.label_count(),
        model.config.window,
        model.feature_dim(),
        model.relations.len(),
        model.vocab.len(),
    ];
    for value in header {
        writer.write_u32::<LittleEndian>(value as u32)?;
    }
    for label in model.label_mode.labels() {
        write_string(&mut writer, label.as_str())?;
    }
    for relation in model.relations.names() {
        write_string(&mut writer, relation)?;
    }
    for word in model.vocab.words() {
        write_string(&mut writer, word)?;
    }

    write_matrix(&mut writer, model.dtrnn.transform.iter().copied())?;
    for matrix in &model.dtrnn.relation {
        write_matrix(&mut writer, matrix.iter().copied())?;
    }
    write_matrix(&mut writer, model.dtrnn.bias.iter().copied())?;
    write_matrix(&mut writer, model.dtrnn.embeddings.matrix().iter().copied())?;
    write_matrix(&mut writer, model.unary.center.iter().copied())?;
    for t in (1..=model.config.window).rev() {
        write_matrix(&mut writer, model.unary.left[t - 1].iter().copied())?;
    }
    for t in 1..=model.config.window {
        write_matrix(&mut writer, model.unary.right[t - 1].iter().copied())?;
    }
    write_matrix(&mut writer, model.transitions.matrix.iter().copied())?;
    writer.flush()?;
    Ok(())
}

/// Deserialize a model saved by [`save_checkpoint`].
///
/// The returned model carries no feature resources; attach them before
/// tagging when the feature dimension is nonzero. The train mode defaults
/// to the label-set's joint variant and can be overridden from a config
/// file.
pub fn load_checkpoint<R: Read>(reader: R) -> Result<Model> {
    let mut reader = BufReader::new(reader);
    let mut magic = [0u8; 6];
    reader
        .read_exact(&mut magic)
        .map_err(truncated("magic bytes"))?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint(format!(
            "bad magic bytes {magic:?}; not a checkpoint or unsupported version"
        )));
    }
    let mut header = [0usize; 6];
    for (slot, name) in header.iter_mut().zip([
        "d", "label count", "window", "feature dim", "relation count", "vocab size",
    ]) {
        *slot = reader.read_u32::<LittleEndian>().map_err(truncated(name))? as usize;
    }
    let [d, labels, window, feature_dim, relation_count, vocab_size] = header;
    if d == 0 || labels == 0 || relation_count == 0 || vocab_size == 0 {
        return Err(Error::Checkpoint("zero-sized header field".into()));
    }

    let label_table: Vec<String> = (0..labels)
        .map(|_| read_string(&mut reader, "label table"))
        .collect::<Result<_>>()?;
    let label_mode = LabelMode::from_label_table(&label_table)?;
    let relation_table: Vec<String> = (0..relation_count)
        .map(|_| read_string(&mut reader, "relation table"))
        .collect::<Result<_>>()?;
    let relations = RelationTable::from_names(relation_table)?;
    let words: Vec<String> = (0..vocab_size)
        .map(|_| read_string(&mut reader, "vocabulary"))
        .collect::<Result<_>>()?;
    let vocab = Vocabulary::from_words(words)?;

    let transform = read_matrix(&mut reader, d, d, "transform matrix")?;
    let relation = (0..relation_count)
        .map(|i| read_matrix(&mut reader, d, d, &format!("relation matrix {i}")))
        .collect::<Result<Vec<_>>>()?;
    let bias = read_vector(&mut reader, d, "bias")?;
    let embeddings = read_matrix(&mut reader, d, vocab_size, "embedding matrix")?;
    let input_dim = d + feature_dim;
    let center = read_matrix(&mut reader, labels, input_dim, "center unary weights")?;
    let mut left = vec![Array2::zeros((0, 0)); window];
    for t in (1..=window).rev() {
        left[t - 1] = read_matrix(&mut reader, labels, input_dim, "left unary weights")?;
    }
    let right = (1..=window)
        .map(|_| read_matrix(&mut reader, labels, input_dim, "right unary weights"))
        .collect::<Result<Vec<_>>>()?;
    let transitions = read_matrix(&mut reader, labels, labels, "transition matrix")?;

    let mut trailing = [0u8; 1];
    match reader.read(&mut trailing) {
        Ok(0) => {}
        Ok(_) => return Err(Error::Checkpoint("trailing bytes after model".into())),
        Err(e) => return Err(Error::Io(e)),
    }

    let features = FeatureConfig::from_dim(feature_dim)?;
    let config = TrainConfig {
        mode: if label_mode == LabelMode::AspectOnly {
            TrainMode::RncrfO
        } else {
            TrainMode::Rncrf
        },
        dim: d,
        window,
        features,
        ..TrainConfig::default()
    };
    let model = Model {
        dtrnn: DtrnnParams {
            transform,
            relation,
            bias,
            embeddings: EmbeddingMatrix::new(embeddings),
        },
        unary: UnaryWeights {
            center,
            left,
            right,
        },
        transitions: TransitionMatrix {
            matrix: transitions,
        },
        relations,
        vocab,
        label_mode,
        config,
        resources: FeatureResources::default(),
    };
    // Resources are intentionally absent at this point, so only the
    // dimensional invariants can be enforced here.
    model
        .validate_dimensions()
        .map_err(|e| Error::Checkpoint(format!("dimension inconsistency on load: {e}")))?;
    Ok(model)
}
