use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use safetensors::tensor::{Dtype as StDtype, SafeTensors, TensorView};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub enum Init {
    Zeros,
    Ones,
    Normal { mean: f64, std: f64 },
    /// He-normal for a layer with `fan_in` inputs followed by a
    /// leaky ReLU of the given slope.
    Kaiming { fan_in: usize, slope: f64 },
}

/// Named trainable tensors, created in a fixed order from one seeded stream
/// so two stores built with the same seed are bit-identical.
pub struct ParamStore {
    names: Vec<String>,
    vars: Vec<Var>,
    index: HashMap<String, usize>,
    dtype: DType,
    device: Device,
    rng: ChaCha8Rng,
}

impl ParamStore {
    pub fn new(seed: u64, dtype: DType) -> Self {
        Self {
            names: Vec::new(),
            vars: Vec::new(),
            index: HashMap::new(),
            dtype,
            device: Device::Cpu,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn var(&mut self, name: impl Into<String>, shape: &[usize], init: Init) -> Result<Tensor> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("parameter `{name}` declared twice")));
        }
        let n: usize = shape.iter().product();
        let values: Vec<f64> = match init {
            Init::Zeros => vec![0.0; n],
            Init::Ones => vec![1.0; n],
            Init::Normal { mean, std } => {
                let d = Normal::new(mean, std).map_err(|e| Error::Config(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut self.rng)).collect()
            }
            Init::Kaiming { fan_in, slope } => {
                let std = (2.0 / ((1.0 + slope * slope) * fan_in.max(1) as f64)).sqrt();
                let d = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
                (0..n).map(|_| d.sample(&mut self.rng)).collect()
            }
        };
        let t = Tensor::from_vec(values, shape, &self.device)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        let out = var.as_tensor().clone();
        self.index.insert(name.clone(), self.vars.len());
        self.names.push(name);
        self.vars.push(var);
        Ok(out)
    }

    pub fn vars(&self) -> &[Var] {
        &self.vars
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.index.get(name).map(|&i| &self.vars[i])
    }

    pub fn num_scalars(&self) -> usize {
        self.vars.iter().map(|v| v.elem_count()).sum()
    }

    /// Deep copy of every parameter.
    pub fn snapshot(&self) -> Result<Vec<Tensor>> {
        Ok(self.vars.iter().map(|v| v.as_tensor().copy()).collect::<candle_core::Result<_>>()?)
    }

    pub fn restore(&self, snapshot: &[Tensor]) -> Result<()> {
        if snapshot.len() != self.vars.len() {
            return Err(Error::Checkpoint(format!(
                "snapshot has {} tensors, model has {}",
                snapshot.len(),
                self.vars.len()
            )));
        }
        for (v, t) in self.vars.iter().zip(snapshot) {
            v.set(t)?;
        }
        Ok(())
    }

    /// Flattened values, mostly for equality checks in tests.
    pub fn flat_values(&self) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.num_scalars());
        for v in &self.vars {
            out.extend(v.flatten_all()?.to_dtype(DType::F64)?.to_vec1::<f64>()?);
        }
        Ok(out)
    }

    /// Writes all parameters (prefixed with `prefix`) into `out`.
    pub fn export(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) {
        for (n, v) in self.names.iter().zip(&self.vars) {
            out.push((format!("{prefix}{n}"), v.as_tensor().clone()));
        }
    }

    /// Loads every parameter named `prefix + name` from `tensors`; all names
    /// and shapes must match.
    pub fn import(&self, prefix: &str, tensors: &HashMap<String, Tensor>) -> Result<()> {
        for (n, v) in self.names.iter().zip(&self.vars) {
            let key = format!("{prefix}{n}");
            let t = tensors
                .get(&key)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor `{key}`")))?;
            if t.dims() != v.dims() {
                return Err(Error::Checkpoint(format!(
                    "tensor `{key}` has shape {:?}, expected {:?}",
                    t.dims(),
                    v.dims()
                )));
            }
            v.set(&t.to_dtype(self.dtype)?)?;
        }
        Ok(())
    }
}

const META_KEY: &str = "histmap";

/// Writes a safetensors archive with string metadata.
pub fn save_tensors(
    path: &Path,
    tensors: &[(String, Tensor)],
    metadata: &BTreeMap<String, String>,
) -> Result<()> {
    let mut buffers = Vec::with_capacity(tensors.len());
    for (name, t) in tensors {
        let (dtype, bytes) = match t.dtype() {
            DType::F32 => (
                StDtype::F32,
                t.flatten_all()?.to_vec1::<f32>()?.iter().flat_map(|x| x.to_le_bytes()).collect::<Vec<u8>>(),
            ),
            DType::F64 => (
                StDtype::F64,
                t.flatten_all()?.to_vec1::<f64>()?.iter().flat_map(|x| x.to_le_bytes()).collect(),
            ),
            other => return Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
        };
        buffers.push((name.clone(), dtype, t.dims().to_vec(), bytes));
    }
    let views = buffers
        .iter()
        .map(|(n, d, s, b)| {
            TensorView::new(*d, s.clone(), b)
                .map(|v| (n.clone(), v))
                .map_err(|e| Error::Checkpoint(e.to_string()))
        })
        .collect::<Result<Vec<_>>>()?;
    // a single metadata key keeps the header byte-stable (the format stores
    // a hash map)
    let packed = serde_json::to_string(metadata).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let meta = HashMap::from([(META_KEY.to_string(), packed)]);
    let bytes = safetensors::serialize(views, Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))?;
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub type TensorArchive = (HashMap<String, Tensor>, BTreeMap<String, String>);

pub fn load_tensors(path: &Path) -> Result<TensorArchive> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, header) =
        SafeTensors::read_metadata(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let metadata: BTreeMap<String, String> = match header.metadata().as_ref().and_then(|m| m.get(META_KEY)) {
        Some(packed) => serde_json::from_str(packed).map_err(|e| Error::Checkpoint(e.to_string()))?,
        None => BTreeMap::new(),
    };
    let st = SafeTensors::deserialize(&bytes).map_err(|e| Error::Checkpoint(e.to_string()))?;
    let mut tensors = HashMap::new();
    for (name, view) in st.tensors() {
        let shape = view.shape().to_vec();
        let data = view.data();
        let t = match view.dtype() {
            StDtype::F32 => {
                let v: Vec<f32> = data.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
                Tensor::from_vec(v, shape, &Device::Cpu)?
            }
            StDtype::F64 => {
                let v: Vec<f64> = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
                Tensor::from_vec(v, shape, &Device::Cpu)?
            }
            other => return Err(Error::Checkpoint(format!("unsupported dtype {other:?} for `{name}`"))),
        };
        tensors.insert(name, t);
    }
    Ok((tensors, metadata))
}
