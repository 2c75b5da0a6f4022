//! Loaders for standard public dataset file formats: idx image archives,
//! CIFAR10 binary batches, and KDD99-style network-connection CSVs.

use super::{assemble_split, DataError, DatasetSplit, MixtureSpec, Pools, Sample};
use crate::Label;
use std::io::Read;
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageDataset {
    Mnist,
    Fmnist,
    Cifar10,
}

impl ImageDataset {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "mnist" => Some(Self::Mnist),
            "fmnist" => Some(Self::Fmnist),
            "cifar10" => Some(Self::Cifar10),
            _ => None,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Self::Mnist => "mnist",
            Self::Fmnist => "fmnist",
            Self::Cifar10 => "cifar10",
        }
    }

    fn classes(self) -> usize {
        10
    }
}

fn corrupt(path: &Path, detail: impl Into<String>) -> DataError {
    DataError::Corrupt {
        path: path.display().to_string(),
        detail: detail.into(),
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, DataError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| corrupt(path, format!("cannot open: {e}")))?
        .read_to_end(&mut buf)?;
    Ok(buf)
}

fn be_u32(b: &[u8]) -> u32 {
    u32::from_be_bytes([b[0], b[1], b[2], b[3]])
}

/// Parses an idx3 image file: magic 0x803, count, rows, cols, u8 pixels.
fn parse_idx_images(path: &Path) -> Result<(usize, usize, Vec<u8>), DataError> {
    let buf = read_file(path)?;
    if buf.len() < 16 || be_u32(&buf) != 0x0803 {
        return Err(corrupt(path, "not an idx3 image file"));
    }
    let n = be_u32(&buf[4..]) as usize;
    let rows = be_u32(&buf[8..]) as usize;
    let cols = be_u32(&buf[12..]) as usize;
    let expected = 16 + n * rows * cols;
    if buf.len() != expected {
        return Err(corrupt(
            path,
            format!("expected {expected} bytes, found {}", buf.len()),
        ));
    }
    Ok((n, rows * cols, buf[16..].to_vec()))
}

/// Parses an idx1 label file: magic 0x801, count, u8 labels.
fn parse_idx_labels(path: &Path) -> Result<Vec<u8>, DataError> {
    let buf = read_file(path)?;
    if buf.len() < 8 || be_u32(&buf) != 0x0801 {
        return Err(corrupt(path, "not an idx1 label file"));
    }
    let n = be_u32(&buf[4..]) as usize;
    if buf.len() != 8 + n {
        return Err(corrupt(path, "label count does not match payload"));
    }
    Ok(buf[8..].to_vec())
}

fn idx_pools(
    data_dir: &Path,
    tag: &str,
    stem: &str,
    inlier_class: usize,
) -> Result<Pools, DataError> {
    let images_path = data_dir.join(format!("{stem}-images-idx3-ubyte"));
    let labels_path = data_dir.join(format!("{stem}-labels-idx1-ubyte"));
    let (n, pixels, data) = parse_idx_images(&images_path)?;
    let labels = parse_idx_labels(&labels_path)?;
    if labels.len() != n {
        return Err(corrupt(&labels_path, "image/label count mismatch"));
    }
    let mut pools = Pools {
        inliers: Vec::new(),
        outliers: Vec::new(),
    };
    for i in 0..n {
        let features: Vec<f32> = data[i * pixels..(i + 1) * pixels]
            .iter()
            .map(|&p| p as f32 / 255.0)
            .collect();
        let label = if labels[i] as usize == inlier_class {
            Label::Inlier
        } else {
            Label::Outlier
        };
        let sample = Sample {
            features,
            true_label: label,
            source_id: format!("{tag}-{stem}-{i}"),
        };
        match label {
            Label::Inlier => pools.inliers.push(sample),
            Label::Outlier => pools.outliers.push(sample),
        }
    }
    Ok(pools)
}

/// One CIFAR10 binary batch: records of 1 label byte + 3072 channel-major
/// pixel bytes.
fn cifar_pools_from(
    path: &Path,
    tag: &str,
    stem: &str,
    inlier_class: usize,
    pools: &mut Pools,
) -> Result<(), DataError> {
    const RECORD: usize = 1 + 3 * 32 * 32;
    let buf = read_file(path)?;
    if buf.is_empty() || buf.len() % RECORD != 0 {
        return Err(corrupt(path, "not a whole number of CIFAR10 records"));
    }
    for (i, rec) in buf.chunks_exact(RECORD).enumerate() {
        let label = rec[0] as usize;
        if label > 9 {
            return Err(corrupt(path, format!("label byte {label} out of range")));
        }
        let features: Vec<f32> = rec[1..].iter().map(|&p| p as f32 / 255.0).collect();
        let sample = Sample {
            features,
            true_label: if label == inlier_class {
                Label::Inlier
            } else {
                Label::Outlier
            },
            source_id: format!("{tag}-{stem}-{i}"),
        };
        if label == inlier_class {
            pools.inliers.push(sample);
        } else {
            pools.outliers.push(sample);
        }
    }
    Ok(())
}

/// Builds a positive-plus-unlabeled split from a standard image corpus laid
/// out in its public distribution format under `data_dir`. Pixels are scaled
/// to [0,1]; the test mixture comes from the corpus's own test files.
pub fn load_image_dataset(
    name: ImageDataset,
    inlier_class: usize,
    spec: &MixtureSpec,
    data_dir: &Path,
) -> Result<DatasetSplit, DataError> {
    if inlier_class >= name.classes() {
        return Err(DataError::InlierClassOutOfRange(inlier_class, name.classes()));
    }
    let tag = name.tag();
    let (train, test) = match name {
        ImageDataset::Mnist | ImageDataset::Fmnist => (
            idx_pools(data_dir, tag, "train", inlier_class)?,
            idx_pools(data_dir, tag, "t10k", inlier_class)?,
        ),
        ImageDataset::Cifar10 => {
            let mut train = Pools {
                inliers: Vec::new(),
                outliers: Vec::new(),
            };
            for b in 1..=5 {
                let stem = format!("data_batch_{b}");
                cifar_pools_from(
                    &data_dir.join(format!("{stem}.bin")),
                    tag,
                    &stem,
                    inlier_class,
                    &mut train,
                )?;
            }
            let mut test = Pools {
                inliers: Vec::new(),
                outliers: Vec::new(),
            };
            cifar_pools_from(
                &data_dir.join("test_batch.bin"),
                tag,
                "test_batch",
                inlier_class,
                &mut test,
            )?;
            (train, test)
        }
    };
    assemble_split(tag, spec, train, test, false)
}

// ---------------------------------------------------------------------------
// KDD99-format CSV. 41 raw columns plus a trailing label. Three categorical
// columns are one-hot expanded over fixed vocabularies (protocol 3, service
// 70, flag 11); the constant num_outbound_cmds column is dropped, leaving
// 37 numeric columns and 121 features total. Numerics are min-max scaled to
// [-1,1] over the loaded file.
// ---------------------------------------------------------------------------

const PROTOCOLS: [&str; 3] = ["icmp", "tcp", "udp"];

const SERVICES: [&str; 70] = [
    "aol", "auth", "bgp", "courier", "csnet_ns", "ctf", "daytime", "discard", "domain",
    "domain_u", "echo", "eco_i", "ecr_i", "efs", "exec", "finger", "ftp", "ftp_data", "gopher",
    "harvest", "hostnames", "http", "http_2784", "http_443", "http_8001", "imap4", "IRC",
    "iso_tsap", "klogin", "kshell", "ldap", "link", "login", "mtp", "name", "netbios_dgm",
    "netbios_ns", "netbios_ssn", "netstat", "nnsp", "nntp", "ntp_u", "other", "pm_dump", "pop_2",
    "pop_3", "printer", "private", "red_i", "remote_job", "rje", "shell", "smtp", "sql_net",
    "ssh", "sunrpc", "supdup", "systat", "telnet", "tftp_u", "tim_i", "time", "urh_i", "urp_i",
    "uucp", "uucp_path", "vmnet", "whois", "X11", "Z39_50",
];

const FLAGS: [&str; 11] = [
    "OTH", "REJ", "RSTO", "RSTOS0", "RSTR", "S0", "S1", "S2", "S3", "SF", "SH",
];

const RAW_COLUMNS: usize = 41;
const COL_PROTOCOL: usize = 1;
const COL_SERVICE: usize = 2;
const COL_FLAG: usize = 3;
const COL_DROPPED: usize = 19;
pub const TABULAR_DIM: usize = 121;

fn one_hot(value: &str, vocab: &[&str], out: &mut Vec<f32>, path: &Path) -> Result<(), DataError> {
    let idx = vocab
        .iter()
        .position(|&v| v == value)
        .ok_or_else(|| corrupt(path, format!("unknown categorical value '{value}'")))?;
    for i in 0..vocab.len() {
        // One-hot indicators live on the same [-1,1] scale as the numerics.
        out.push(if i == idx { 1.0 } else { -1.0 });
    }
    Ok(())
}

/// Loads a KDD99-format connection file and builds a split: normal traffic
/// forms the inlier pool, attacks the outlier pool.
pub fn load_tabular_dataset(path: &Path, spec: &MixtureSpec) -> Result<DatasetSplit, DataError> {
    let text = std::fs::read_to_string(path).map_err(|e| corrupt(path, format!("{e}")))?;
    let mut numeric_rows: Vec<Vec<f64>> = Vec::new();
    let mut cat_rows: Vec<(String, String, String)> = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim().trim_end_matches('.');
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != RAW_COLUMNS + 1 {
            return Err(corrupt(
                path,
                format!(
                    "line {}: expected {} columns, found {}",
                    lineno + 1,
                    RAW_COLUMNS + 1,
                    fields.len()
                ),
            ));
        }
        let mut numerics = Vec::with_capacity(37);
        for (col, &field) in fields[..RAW_COLUMNS].iter().enumerate() {
            if col == COL_PROTOCOL || col == COL_SERVICE || col == COL_FLAG || col == COL_DROPPED {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                corrupt(
                    path,
                    format!("line {}: non-numeric value '{field}' in column {col}", lineno + 1),
                )
            })?;
            numerics.push(v);
        }
        numeric_rows.push(numerics);
        cat_rows.push((
            fields[COL_PROTOCOL].to_string(),
            fields[COL_SERVICE].to_string(),
            fields[COL_FLAG].to_string(),
        ));
        labels.push(if fields[RAW_COLUMNS] == "normal" {
            Label::Inlier
        } else {
            Label::Outlier
        });
    }
    if numeric_rows.is_empty() {
        return Err(corrupt(path, "no data rows"));
    }

    // Column-wise min-max over the loaded file; constant columns map to 0.
    let n_numeric = numeric_rows[0].len();
    let mut lo = vec![f64::INFINITY; n_numeric];
    let mut hi = vec![f64::NEG_INFINITY; n_numeric];
    for row in &numeric_rows {
        for (j, &v) in row.iter().enumerate() {
            lo[j] = lo[j].min(v);
            hi[j] = hi[j].max(v);
        }
    }

    let mut pools = Pools {
        inliers: Vec::new(),
        outliers: Vec::new(),
    };
    for (i, (row, cats)) in numeric_rows.iter().zip(&cat_rows).enumerate() {
        let mut features: Vec<f32> = Vec::with_capacity(TABULAR_DIM);
        for (j, &v) in row.iter().enumerate() {
            let scaled = if hi[j] > lo[j] {
                2.0 * (v - lo[j]) / (hi[j] - lo[j]) - 1.0
            } else {
                0.0
            };
            features.push(scaled as f32);
        }
        one_hot(&cats.0, &PROTOCOLS, &mut features, path)?;
        one_hot(&cats.1, &SERVICES, &mut features, path)?;
        one_hot(&cats.2, &FLAGS, &mut features, path)?;
        if features.len() != TABULAR_DIM {
            return Err(corrupt(
                path,
                format!("expanded to {} features, expected {TABULAR_DIM}", features.len()),
            ));
        }
        let sample = Sample {
            features,
            true_label: labels[i],
            source_id: format!("tabular-{i}"),
        };
        match labels[i] {
            Label::Inlier => pools.inliers.push(sample),
            Label::Outlier => pools.outliers.push(sample),
        }
    }
    assemble_split("tabular", spec, pools, Pools { inliers: vec![], outliers: vec![] }, true)
}
