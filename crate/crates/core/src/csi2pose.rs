//! The RF-to-pose network: a shared transformer trunk that lifts an RF frame
//! to image-space feature maps, plus separate JHM and PAF generator heads.
//! Cross-modal training fits the heads to visual-channel labels.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureGeometry, Jhm, Paf, Pose2D};
use crate::nn::checkpoint;
use crate::nn::{
    train, weighted_mse_jhm, weighted_mse_paf, EpochStats, LayerSpec, LossWeights, Network,
    NetworkSpec, OptimizerConfig, Tensor, TrainTask, TrainableModel,
};
use crate::preprocess::RfFrame;

/// Architecture of the RF-to-pose network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Csi2PoseSpec {
    pub rf_slices: usize,
    pub tx_antennas: usize,
    pub rx_antennas: usize,
    pub subcarriers: usize,
    /// Spatial grid the subcarrier axis is folded onto; the network upsamples
    /// it by 16x to the feature resolution.
    pub lift_grid: (usize, usize),
    pub transformer_width: usize,
    pub head_width: usize,
    pub residual_blocks: usize,
    pub feature_geometry: FeatureGeometry,
    pub init_seed: u64,
}

impl Default for Csi2PoseSpec {
    fn default() -> Self {
        Csi2PoseSpec {
            rf_slices: 5,
            tx_antennas: 3,
            rx_antennas: 3,
            subcarriers: 30,
            lift_grid: (4, 8),
            transformer_width: 32,
            head_width: 16,
            residual_blocks: 3,
            feature_geometry: FeatureGeometry::default(),
            init_seed: 40,
        }
    }
}

impl Csi2PoseSpec {
    pub fn input_channels(&self) -> usize {
        self.rf_slices * self.tx_antennas * self.rx_antennas
    }

    pub fn validate(&self) -> Result<()> {
        let (gh, gw) = self.lift_grid;
        if gh * gw < self.subcarriers {
            return Err(Error::Config(format!(
                "lift grid {gh}x{gw} cannot hold {} subcarriers",
                self.subcarriers
            )));
        }
        if self.feature_geometry.height != gh * 16 || self.feature_geometry.width != gw * 16 {
            return Err(Error::Config(format!(
                "feature geometry {}x{} must be 16x the lift grid {gh}x{gw}",
                self.feature_geometry.height, self.feature_geometry.width
            )));
        }
        if self.transformer_width == 0 || self.head_width == 0 {
            return Err(Error::Config("channel widths must be positive".into()));
        }
        Ok(())
    }

    fn trunk_spec(&self) -> NetworkSpec {
        let c = self.input_channels();
        let tw = self.transformer_width;
        let mut layers = vec![
            LayerSpec::ConvTranspose { in_ch: c, out_ch: tw, kernel: 4, stride: 2, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::ConvTranspose { in_ch: tw, out_ch: tw, kernel: 4, stride: 2, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::Conv { in_ch: tw, out_ch: tw, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Relu,
            LayerSpec::Conv { in_ch: tw, out_ch: tw, kernel: 3, stride: 1, padding: 1 },
            LayerSpec::Relu,
        ];
        for _ in 0..self.residual_blocks {
            layers.push(LayerSpec::Residual { channels: tw });
        }
        NetworkSpec {
            input_shape: vec![c, self.lift_grid.0, self.lift_grid.1],
            layers,
            init_seed: self.init_seed,
        }
    }

    fn head_spec(&self, out_channels: usize, seed_offset: u64) -> NetworkSpec {
        let tw = self.transformer_width;
        let hw = self.head_width;
        let (gh, gw) = self.lift_grid;
        NetworkSpec {
            input_shape: vec![tw, gh * 4, gw * 4],
            layers: vec![
                LayerSpec::ConvTranspose { in_ch: tw, out_ch: hw, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv { in_ch: hw, out_ch: hw, kernel: 3, stride: 1, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::ConvTranspose { in_ch: hw, out_ch: hw, kernel: 4, stride: 2, padding: 1 },
                LayerSpec::Relu,
                LayerSpec::Conv { in_ch: hw, out_ch: out_channels, kernel: 1, stride: 1, padding: 0 },
            ],
            init_seed: self.init_seed.wrapping_add(seed_offset),
        }
    }
}

/// Trunk plus two generator heads.
#[derive(Debug, Clone, PartialEq)]
pub struct Csi2PoseNet {
    spec: Csi2PoseSpec,
    trunk: Network,
    jhm_head: Network,
    paf_head: Network,
}

impl Csi2PoseNet {
    pub fn build(spec: &Csi2PoseSpec) -> Result<Csi2PoseNet> {
        spec.validate()?;
        let trunk = Network::build(&spec.trunk_spec())?;
        let jhm_head = Network::build(&spec.head_spec(crate::features::KEYPOINT_COUNT, 1))?;
        let paf_head = Network::build(&spec.head_spec(2 * crate::features::LIMB_COUNT, 2))?;
        Ok(Csi2PoseNet { spec: spec.clone(), trunk, jhm_head, paf_head })
    }

    pub fn spec(&self) -> &Csi2PoseSpec {
        &self.spec
    }

    /// Folds an RF frame into the network's input tensor: one channel per
    /// (slice, tx, rx) triple, subcarriers row-major on the lift grid with
    /// zero padding at the tail.
    pub fn lift_input(&self, rf: &RfFrame) -> Result<Tensor> {
        let s = &self.spec;
        let expected = s.rf_slices * s.tx_antennas * s.rx_antennas * s.subcarriers;
        if rf.values.len() != expected || rf.slices != s.rf_slices {
            return Err(Error::Contract(format!(
                "rf frame of {} values (F={}) does not match the configured {}x{}x{}x{}",
                rf.values.len(),
                rf.slices,
                s.rf_slices,
                s.tx_antennas,
                s.rx_antennas,
                s.subcarriers
            )));
        }
        let (gh, gw) = s.lift_grid;
        let channels = s.input_channels();
        let mut data = vec![0.0; channels * gh * gw];
        let cell = gh * gw;
        for ch in 0..channels {
            let src = &rf.values[ch * s.subcarriers..(ch + 1) * s.subcarriers];
            data[ch * cell..ch * cell + s.subcarriers].copy_from_slice(src);
        }
        Tensor::from_vec(&[channels, gh, gw], data)
    }

    /// Raw head outputs as tensors (`[J,H,W]` and `[2C,H,W]`).
    pub fn infer_tensors(&self, rf: &RfFrame) -> Result<(Tensor, Tensor)> {
        let x = self.lift_input(rf)?;
        let mid = self.trunk.infer(&x)?;
        Ok((self.jhm_head.infer(&mid)?, self.paf_head.infer(&mid)?))
    }

    /// Pose features inferred from an RF frame.
    pub fn infer(&self, rf: &RfFrame) -> Result<(Jhm, Paf)> {
        let (jhm_t, paf_t) = self.infer_tensors(rf)?;
        let fg = &self.spec.feature_geometry;
        let jhm = Jhm::from_data(fg.height, fg.width, jhm_t.into_data())?;
        let paf = Paf::from_data(fg.height, fg.width, paf_t.into_data())?;
        Ok((jhm, paf))
    }

    /// Loss and flat parameter gradient against label tensors.
    pub fn loss_and_grad(
        &self,
        input: &Tensor,
        jhm_label: &Tensor,
        paf_label: &Tensor,
        weights: &LossWeights,
    ) -> Result<(f64, Vec<f64>)> {
        let trunk_trace = self.trunk.forward(input)?;
        let jhm_trace = self.jhm_head.forward(&trunk_trace.output)?;
        let paf_trace = self.paf_head.forward(&trunk_trace.output)?;
        let (jhm_loss, jhm_grad) = weighted_mse_jhm(&jhm_trace.output, jhm_label, weights)?;
        let (paf_loss, paf_grad) = weighted_mse_paf(&paf_trace.output, paf_label, weights)?;
        let (jhm_params, jhm_in) = self.jhm_head.backward(&jhm_trace, &jhm_grad)?;
        let (paf_params, paf_in) = self.paf_head.backward(&paf_trace, &paf_grad)?;
        let mut mid_grad = jhm_in;
        for (a, b) in mid_grad.data_mut().iter_mut().zip(paf_in.data()) {
            *a += b;
        }
        let (trunk_params, _) = self.trunk.backward(&trunk_trace, &mid_grad)?;
        let mut flat = trunk_params;
        flat.extend_from_slice(&jhm_params);
        flat.extend_from_slice(&paf_params);
        Ok((jhm_loss + paf_loss, flat))
    }

    pub fn loss_only(
        &self,
        input: &Tensor,
        jhm_label: &Tensor,
        paf_label: &Tensor,
        weights: &LossWeights,
    ) -> Result<f64> {
        let mid = self.trunk.infer(input)?;
        let jhm_out = self.jhm_head.infer(&mid)?;
        let paf_out = self.paf_head.infer(&mid)?;
        let (jhm_loss, _) = weighted_mse_jhm(&jhm_out, jhm_label, weights)?;
        let (paf_loss, _) = weighted_mse_paf(&paf_out, paf_label, weights)?;
        Ok(jhm_loss + paf_loss)
    }

    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        checkpoint::save_networks(path, &[&self.trunk, &self.jhm_head, &self.paf_head])
    }

    pub fn load(path: &std::path::Path, spec: &Csi2PoseSpec) -> Result<Csi2PoseNet> {
        let nets = checkpoint::load_networks(path)?;
        if nets.len() != 3 {
            return Err(Error::format(path, format!("expected 3 networks, found {}", nets.len())));
        }
        let mut it = nets.into_iter();
        let net = Csi2PoseNet {
            spec: spec.clone(),
            trunk: it.next().unwrap(),
            jhm_head: it.next().unwrap(),
            paf_head: it.next().unwrap(),
        };
        let expected = Csi2PoseNet::build(spec)?;
        if expected.trunk.spec() != net.trunk.spec()
            || expected.jhm_head.spec() != net.jhm_head.spec()
            || expected.paf_head.spec() != net.paf_head.spec()
        {
            return Err(Error::format(path, "checkpoint does not match the given spec"));
        }
        Ok(net)
    }
}

impl TrainableModel for Csi2PoseNet {
    fn param_count(&self) -> usize {
        self.trunk.param_count() + self.jhm_head.param_count() + self.paf_head.param_count()
    }

    fn params_flat(&self) -> Vec<f64> {
        let mut out = self.trunk.params_flat();
        out.extend(self.jhm_head.params_flat());
        out.extend(self.paf_head.params_flat());
        out
    }

    fn set_params_flat(&mut self, params: &[f64]) -> Result<()> {
        let t = self.trunk.param_count();
        let j = self.jhm_head.param_count();
        let p = self.paf_head.param_count();
        if params.len() != t + j + p {
            return Err(Error::Contract(format!(
                "parameter vector of {} does not match model size {}",
                params.len(),
                t + j + p
            )));
        }
        self.trunk.set_params_flat(&params[..t])?;
        self.jhm_head.set_params_flat(&params[t..t + j])?;
        self.paf_head.set_params_flat(&params[t + j..])?;
        Ok(())
    }
}

/// One cross-modal training pair: a lifted RF input plus the label poses the
/// visual channel produced for the same frame. Label maps are rendered on
/// demand to keep memory flat.
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub input: Tensor,
    pub label_poses: Vec<Pose2D>,
}

/// Training task over cross-modal pairs.
pub struct CrossModalTask {
    pub pairs: Vec<TrainPair>,
    pub fg: FeatureGeometry,
    pub weights: LossWeights,
}

impl CrossModalTask {
    fn labels(&self, index: usize) -> Result<(Tensor, Tensor)> {
        let fg = &self.fg;
        let topology = crate::features::Body14Topology::standard();
        let jhm = crate::features::render_jhm(&self.pairs[index].label_poses, fg);
        let paf = crate::features::render_paf(&self.pairs[index].label_poses, fg, &topology);
        let jhm_t = Tensor::from_vec(
            &[crate::features::KEYPOINT_COUNT, fg.height, fg.width],
            jhm.data().to_vec(),
        )?;
        let paf_t = Tensor::from_vec(
            &[2 * crate::features::LIMB_COUNT, fg.height, fg.width],
            paf.data().to_vec(),
        )?;
        Ok((jhm_t, paf_t))
    }
}

impl TrainTask<Csi2PoseNet> for CrossModalTask {
    fn sample_count(&self) -> usize {
        self.pairs.len()
    }

    fn loss_and_grad(&self, model: &Csi2PoseNet, index: usize) -> Result<(f64, Vec<f64>)> {
        let (jhm, paf) = self.labels(index)?;
        model.loss_and_grad(&self.pairs[index].input, &jhm, &paf, &self.weights)
    }

    fn loss_only(&self, model: &Csi2PoseNet, index: usize) -> Result<f64> {
        let (jhm, paf) = self.labels(index)?;
        model.loss_only(&self.pairs[index].input, &jhm, &paf, &self.weights)
    }
}

/// Trains the RF-to-pose network on visual-channel labels.
pub fn train_csi2pose(
    net: &mut Csi2PoseNet,
    task: &CrossModalTask,
    opt: &OptimizerConfig,
) -> Result<Vec<EpochStats>> {
    task.weights.validate()?;
    train(net, task, opt)
}
