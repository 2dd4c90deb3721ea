//! Text formats: JSON model files and CSV streams/datasets.
//!
//! Model files list layers shallowest first. Weights are nested as
//! `[tap][output channel][input channel]`; numbers are written in the
//! shortest form that parses back to the same `f64`, so a round trip is
//! bit-exact.
//!
//! Stream CSV has one row per frame with header `c0,...,c{C-1}`. Dataset
//! CSV appends `sample` and `label` columns; consecutive rows with the same
//! sample id form one sequence. Lines starting with `#` are comments.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cae::{CaeModel, LabeledDataset};
use crate::conv::{Activation, ConvLayerParams, NetworkSpec, Sequence};
use crate::error::{invalid, Error, Result};

const MODEL_FORMAT: &str = "deepshift-model";

#[derive(Debug, Serialize, Deserialize)]
struct LayerDoc {
    w: usize,
    c_in: usize,
    c_out: usize,
    activation: String,
    weights: Vec<Vec<Vec<f64>>>,
    bias: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ModelDoc {
    #[serde(default = "default_format")]
    format: String,
    layers: Vec<LayerDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    decoder_bias: Option<Vec<f64>>,
}

fn default_format() -> String {
    MODEL_FORMAT.to_string()
}

/// Parsed contents of a model file.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelFile {
    pub network: NetworkSpec,
    pub decoder_bias: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn new(network: NetworkSpec) -> Self {
        ModelFile {
            network,
            decoder_bias: None,
        }
    }

    pub fn from_cae(model: &CaeModel) -> Self {
        ModelFile {
            network: NetworkSpec::new(vec![model.encoder().clone()]).expect("single layer always chains"),
            decoder_bias: Some(model.decoder_bias().to_vec()),
        }
    }

    /// Interpret a single-layer file as an auto-encoder (missing decoder bias = zeros).
    pub fn to_cae(&self) -> Result<CaeModel> {
        if self.network.depth() != 1 {
            return invalid(format!(
                "auto-encoder files hold exactly one layer, found {}",
                self.network.depth()
            ));
        }
        let enc = self.network.layers()[0].clone();
        let bias = self.decoder_bias.clone().unwrap_or_else(|| vec![0.0; enc.c_in()]);
        CaeModel::new(enc, bias)
    }

    pub fn to_json(&self) -> String {
        let layers = self
            .network
            .layers()
            .iter()
            .map(|l| LayerDoc {
                w: l.window(),
                c_in: l.c_in(),
                c_out: l.c_out(),
                activation: l.activation().name().to_string(),
                weights: (0..l.window())
                    .map(|tau| l.tap(tau).chunks_exact(l.c_in()).map(<[f64]>::to_vec).collect())
                    .collect(),
                bias: l.bias().to_vec(),
            })
            .collect();
        let doc = ModelDoc {
            format: default_format(),
            layers,
            decoder_bias: self.decoder_bias.clone(),
        };
        serde_json::to_string_pretty(&doc).expect("model document serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        if doc.format != MODEL_FORMAT {
            return Err(Error::Parse(format!("unsupported model format `{}`", doc.format)));
        }
        let mut layers = Vec::with_capacity(doc.layers.len());
        for (k, l) in doc.layers.into_iter().enumerate() {
            if l.weights.len() != l.w {
                return invalid(format!("layer {k}: {} weight taps listed, w={}", l.weights.len(), l.w));
            }
            let mut flat = Vec::with_capacity(l.w * l.c_out * l.c_in);
            for (tau, m) in l.weights.iter().enumerate() {
                if m.len() != l.c_out || m.iter().any(|row| row.len() != l.c_in) {
                    return invalid(format!(
                        "layer {k}: tap {tau} is not a {}x{} matrix",
                        l.c_out, l.c_in
                    ));
                }
                for row in m {
                    flat.extend_from_slice(row);
                }
            }
            let act = Activation::parse(&l.activation)?;
            layers.push(
                ConvLayerParams::new(l.w, l.c_in, l.c_out, flat, l.bias, act)
                    .map_err(|e| Error::InvalidInput(format!("layer {k}: {e}")))?,
            );
        }
        let network = NetworkSpec::new(layers)?;
        if let Some(b) = &doc.decoder_bias {
            if b.len() != network.c_in() {
                return invalid(format!(
                    "decoder_bias has {} entries, network input has {} channels",
                    b.len(),
                    network.c_in()
                ));
            }
        }
        Ok(ModelFile {
            network,
            decoder_bias: doc.decoder_bias,
        })
    }

    pub fn read(path: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(path)?.read_to_string(&mut text)?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = File::create(path)?;
        f.write_all(self.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(())
    }
}

fn channel_header(c: usize) -> Vec<String> {
    (0..c).map(|i| format!("c{i}")).collect()
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(r)
}

fn parse_value(field: &str, row: usize) -> Result<f64> {
    let v: f64 = field
        .parse()
        .map_err(|e| Error::Parse(format!("row {row}: `{field}` is not a number ({e})")))?;
    if !v.is_finite() {
        return Err(Error::Parse(format!("row {row}: non-finite value `{field}`")));
    }
    Ok(v)
}

fn channel_columns(headers: &csv::StringRecord) -> Result<usize> {
    let c = headers.iter().take_while(|h| h.starts_with('c')).count();
    for (i, h) in headers.iter().take(c).enumerate() {
        if h != format!("c{i}") {
            return Err(Error::Parse(format!("expected column `c{i}`, found `{h}`")));
        }
    }
    if c == 0 {
        return Err(Error::Parse("no channel columns (c0, c1, ...) in header".into()));
    }
    Ok(c)
}

/// Write a sequence as stream CSV.
pub fn write_stream<W: Write>(w: W, seq: &Sequence) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(channel_header(seq.context()))?;
    for f in seq.frames() {
        out.write_record(f.iter().map(|v| v.to_string()))?;
    }
    out.flush()?;
    Ok(())
}

/// Read stream CSV. A trailing `label` column, if present, is ignored.
pub fn read_stream<R: Read>(r: R) -> Result<Sequence> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    let c = channel_columns(&headers)?;
    let mut seq = Sequence::empty(c);
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let frame = rec.iter().take(c).map(|f| parse_value(f, row + 1)).collect::<Result<Vec<_>>>()?;
        seq.push(&frame)?;
    }
    Ok(seq)
}

pub fn read_stream_file(path: &Path) -> Result<Sequence> {
    read_stream(BufReader::new(File::open(path)?))
}

/// Write a labeled dataset as CSV with `sample` and `label` columns.
pub fn write_dataset<W: Write>(w: W, data: &LabeledDataset) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = channel_header(data.context());
    header.push("sample".into());
    header.push("label".into());
    out.write_record(&header)?;
    for (id, (s, &y)) in data.samples().iter().zip(data.labels()).enumerate() {
        for f in s.frames() {
            let mut rec: Vec<String> = f.iter().map(|v| v.to_string()).collect();
            rec.push(id.to_string());
            rec.push(y.to_string());
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Read dataset CSV. Samples of unequal length need `len` to resample them.
pub fn read_dataset<R: Read>(r: R, len: Option<usize>) -> Result<LabeledDataset> {
    let mut rdr = reader(r);
    let headers = rdr.headers()?.clone();
    let c = channel_columns(&headers)?;
    if headers.get(c) != Some("sample") || headers.get(c + 1) != Some("label") || headers.len() != c + 2 {
        return Err(Error::Parse("dataset header must end with `sample,label`".into()));
    }
    let mut order: Vec<String> = Vec::new();
    let mut by_id: HashMap<String, (Sequence, usize)> = HashMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let frame = rec.iter().take(c).map(|f| parse_value(f, row + 1)).collect::<Result<Vec<_>>>()?;
        let id = rec[c].to_string();
        let label: usize = rec[c + 1]
            .parse()
            .map_err(|e| Error::Parse(format!("row {}: bad label `{}` ({e})", row + 1, &rec[c + 1])))?;
        let entry = by_id.entry(id.clone()).or_insert_with(|| {
            order.push(id.clone());
            (Sequence::empty(c), label)
        });
        if entry.1 != label {
            return Err(Error::Parse(format!("sample `{id}` has conflicting labels")));
        }
        entry.0.push(&frame)?;
    }
    if order.is_empty() {
        return invalid("dataset has no rows");
    }
    let mut samples = Vec::with_capacity(order.len());
    let mut labels = Vec::with_capacity(order.len());
    for id in &order {
        let (s, y) = by_id.remove(id).expect("id recorded on insert");
        samples.push(s);
        labels.push(y);
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    match len {
        Some(len) => LabeledDataset::from_ragged(samples, labels, classes, len),
        None => LabeledDataset::new(samples, labels, classes),
    }
}

pub fn read_dataset_file(path: &Path, len: Option<usize>) -> Result<LabeledDataset> {
    read_dataset(BufReader::new(File::open(path)?), len)
}
