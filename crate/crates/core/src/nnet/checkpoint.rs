use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::adam::{Adam, AdamHyper};
use super::network::{Architecture, InputShape, NetParams, QNetwork};
use super::NetError;
use crate::encode::{MapMode, ObsNorms};

const MAGIC: &[u8; 8] = b"UAVQNET\0";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained agent state: both networks, optimizer moments and the step count.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub online: QNetwork<f32>,
    pub target: QNetwork<f32>,
    pub adam: Adam<f32>,
    pub step: u64,
    pub mode: MapMode,
    pub norms: ObsNorms,
}

#[derive(Serialize, Deserialize)]
struct Header {
    version: u32,
    endianness: String,
    dtype: String,
    net: NetParams,
    input: InputShape,
    outputs: usize,
    param_count: usize,
    mode: MapMode,
    data_norm: f64,
    flight_budget_norm: u32,
    step: u64,
    adam: AdamHyper,
    adam_t: u64,
}

impl Checkpoint {
    pub fn new(online: QNetwork<f32>, lr: f64, mode: MapMode, norms: ObsNorms) -> Self {
        let adam = Adam::new(online.params().len(), lr);
        Checkpoint { target: online.clone(), online, adam, step: 0, mode, norms }
    }

    /// Layout: 8-byte magic, little-endian u32 header length, JSON header,
    /// then four little-endian f32 arrays (online, target, adam m, adam v).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<(), NetError> {
        let arch = self.online.arch();
        let header = Header {
            version: CHECKPOINT_VERSION,
            endianness: "little".into(),
            dtype: "f32".into(),
            net: arch.params.clone(),
            input: arch.input,
            outputs: arch.outputs,
            param_count: arch.param_count(),
            mode: self.mode,
            data_norm: self.norms.data,
            flight_budget_norm: self.norms.flight_budget,
            step: self.step,
            adam: self.adam.hyper,
            adam_t: self.adam.t,
        };
        let json = serde_json::to_vec(&header).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        w.write_all(MAGIC)?;
        w.write_all(&(json.len() as u32).to_le_bytes())?;
        w.write_all(&json)?;
        for array in [self.online.params(), self.target.params(), &self.adam.m, &self.adam.v] {
            for v in array {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self, NetError> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(NetError::Checkpoint("not a checkpoint file".into()));
        }
        let mut len = [0u8; 4];
        r.read_exact(&mut len)?;
        let mut json = vec![0u8; u32::from_le_bytes(len) as usize];
        r.read_exact(&mut json)?;
        let header: Header = serde_json::from_slice(&json).map_err(|e| NetError::Checkpoint(e.to_string()))?;
        if header.version != CHECKPOINT_VERSION {
            return Err(NetError::Checkpoint(format!("unsupported version {}", header.version)));
        }
        if header.endianness != "little" || header.dtype != "f32" {
            return Err(NetError::Checkpoint("only little-endian f32 checkpoints are supported".into()));
        }
        let arch = Architecture::new(&header.net, header.input, header.outputs)?;
        if arch.param_count() != header.param_count {
            return Err(NetError::Checkpoint("parameter count does not match architecture".into()));
        }
        let mut read_array = || -> Result<Vec<f32>, NetError> {
            let mut bytes = vec![0u8; header.param_count * 4];
            r.read_exact(&mut bytes)?;
            Ok(bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect())
        };
        let online = QNetwork::from_params(arch.clone(), read_array()?)?;
        let target = QNetwork::from_params(arch, read_array()?)?;
        let m = read_array()?;
        let v = read_array()?;
        Ok(Checkpoint {
            online,
            target,
            adam: Adam { hyper: header.adam, t: header.adam_t, m, v },
            step: header.step,
            mode: header.mode,
            norms: ObsNorms { data: header.data_norm, flight_budget: header.flight_budget_norm },
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        Self::read_from(&mut BufReader::new(File::open(path)?))
    }
}
