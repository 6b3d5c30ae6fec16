//! The two backends and the shared classification head.

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::layers::{global_avg_pool, global_avg_pool_backward, relu, BatchNorm, Conv2d, Dropout, Linear, MaxPool2d, Relu, Visitor};
use super::tensor::{Cache, Scalar, Tensor};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Backend {
    ReferenceCnn,
    Resnet18,
}

impl Backend {
    pub fn name(self) -> &'static str {
        match self {
            Backend::ReferenceCnn => "reference_cnn",
            Backend::Resnet18 => "resnet18",
        }
    }
}

impl std::str::FromStr for Backend {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "reference_cnn" => Ok(Backend::ReferenceCnn),
            "resnet18" => Ok(Backend::Resnet18),
            other => Err(format!("unknown backend `{other}` (expected reference_cnn or resnet18)")),
        }
    }
}

/// Everything needed to rebuild a network's tensor layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub backend: Backend,
    pub classes: usize,
    pub head_units: usize,
    pub dropout: f64,
    pub input_size: usize,
}

/// Batch norm on the base output, a ReLU hidden layer, dropout, then logits.
#[derive(Debug, Clone)]
pub struct Head<S> {
    bn: BatchNorm<S>,
    fc1: Linear<S>,
    relu: Relu,
    dropout: Dropout<S>,
    fc2: Linear<S>,
}

impl<S: Scalar> Head<S> {
    fn new(features: usize, units: usize, classes: usize, dropout: f64) -> Self {
        Self {
            bn: BatchNorm::new(features),
            fc1: Linear::new(features, units),
            relu: Relu::default(),
            dropout: Dropout::new(dropout),
            fc2: Linear::new(units, classes),
        }
    }

    fn init(&mut self, rng: &mut ChaCha8Rng) {
        self.fc1.init(rng);
        // Near-zero logits keep initial predictions close to uniform.
        self.fc2.init_small(rng, 0.01);
    }

    fn forward(&self, feats: Tensor<S>) -> Tensor<S> {
        let h = relu(self.fc1.forward(&self.bn.forward(feats)));
        self.fc2.forward(&h)
    }

    fn forward_train(&mut self, feats: Tensor<S>, dropout_seed: u64) -> Tensor<S> {
        let h = self.bn.forward_train(feats);
        let h = self.relu.forward_train(self.fc1.forward_train(h));
        let h = self.dropout.forward_train(h, dropout_seed);
        self.fc2.forward_train(h)
    }

    fn backward(&mut self, g: Tensor<S>) -> Tensor<S> {
        let g = self.dropout.backward(self.fc2.backward(g));
        let g = self.fc1.backward(self.relu.backward(g));
        self.bn.backward(g)
    }

    fn visit(&mut self, f: &mut Visitor<'_, S>) {
        self.bn.visit("head.bn", f);
        self.fc1.visit("head.fc1", f);
        self.fc2.visit("head.fc2", f);
    }

    fn clear_cache(&mut self) {
        self.bn.clear_cache();
        self.fc1.clear_cache();
        self.relu.clear_cache();
        self.dropout.clear_cache();
        self.fc2.clear_cache();
    }
}

#[derive(Debug, Clone)]
struct ConvStage<S> {
    conv: Conv2d<S>,
    bn: BatchNorm<S>,
    relu: Relu,
    pool: MaxPool2d,
}

impl<S: Scalar> ConvStage<S> {
    fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        self.pool.forward(&relu(self.bn.forward(self.conv.forward(x))))
    }

    fn forward_train(&mut self, x: Tensor<S>) -> Tensor<S> {
        let y = self.bn.forward_train(self.conv.forward_train(x));
        self.pool.forward_train(self.relu.forward_train(y))
    }

    fn backward(&mut self, g: Tensor<S>) -> Option<Tensor<S>> {
        let g = self.relu.backward(self.pool.backward(g));
        self.conv.backward(self.bn.backward(g))
    }

    fn clear_cache(&mut self) {
        self.conv.clear_cache();
        self.bn.clear_cache();
        self.relu.clear_cache();
        self.pool.clear_cache();
    }
}

/// Channel widths of the reference network's three conv stages.
pub const REFERENCE_CHANNELS: [usize; 3] = [8, 16, 32];

/// Small from-scratch CNN: three conv/BN/ReLU/max-pool stages reducing the
/// input by 32 per side, followed by the shared head.
#[derive(Debug, Clone)]
pub struct ReferenceCnn<S> {
    stages: Vec<ConvStage<S>>,
    head: Head<S>,
    feat_shape: [usize; 3],
}

impl<S: Scalar> ReferenceCnn<S> {
    pub fn new(arch: &Architecture, rng: &mut ChaCha8Rng) -> Self {
        assert!(arch.input_size >= 32 && arch.input_size.is_multiple_of(32), "reference input size must be a multiple of 32");
        let [c1, c2, c3] = REFERENCE_CHANNELS;
        // (in, out, conv stride, pool size)
        let plan = [(3, c1, 2, 2), (c1, c2, 1, 2), (c2, c3, 1, 4)];
        let mut stages: Vec<ConvStage<S>> = plan
            .iter()
            .map(|&(cin, cout, stride, pool)| ConvStage {
                conv: Conv2d::new(cin, cout, 3, stride, 1, false),
                bn: BatchNorm::new(cout),
                relu: Relu::default(),
                pool: MaxPool2d::new(pool, pool, 0),
            })
            .collect();
        stages[0].conv.input_grad = false;
        for s in &mut stages {
            s.conv.init(rng);
        }
        let side = arch.input_size / 32;
        let features = c3 * side * side;
        let mut head = Head::new(features, arch.head_units, arch.classes, arch.dropout);
        head.init(rng);
        Self {
            stages,
            head,
            feat_shape: [c3, side, side],
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let mut h = self.stages[0].forward(x);
        for s in &self.stages[1..] {
            h = s.forward(&h);
        }
        self.head.forward(h.flatten())
    }

    fn forward_train(&mut self, x: Tensor<S>, dropout_seed: u64) -> Tensor<S> {
        let mut h = x;
        for s in &mut self.stages {
            h = s.forward_train(h);
        }
        self.head.forward_train(h.flatten(), dropout_seed)
    }

    fn backward(&mut self, g: Tensor<S>) {
        let n = g.batch();
        let [c, hh, ww] = self.feat_shape;
        let mut g = Some(self.head.backward(g).reshape([n, c, hh, ww]));
        for s in self.stages.iter_mut().rev() {
            g = s.backward(g.expect("interior stages propagate gradients"));
        }
    }

    fn visit(&mut self, f: &mut Visitor<'_, S>) {
        for (i, s) in self.stages.iter_mut().enumerate() {
            s.conv.visit(&format!("base.stages.{i}.conv"), f);
            s.bn.visit(&format!("base.stages.{i}.bn"), f);
        }
        self.head.visit(f);
    }

    fn clear_cache(&mut self) {
        self.stages.iter_mut().for_each(ConvStage::clear_cache);
        self.head.clear_cache();
    }
}

#[derive(Debug, Clone)]
struct BasicBlock<S> {
    conv1: Conv2d<S>,
    bn1: BatchNorm<S>,
    relu1: Relu,
    conv2: Conv2d<S>,
    bn2: BatchNorm<S>,
    downsample: Option<(Conv2d<S>, BatchNorm<S>)>,
    relu2: Relu,
}

impl<S: Scalar> BasicBlock<S> {
    fn new(cin: usize, cout: usize, stride: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut conv1 = Conv2d::new(cin, cout, 3, stride, 1, false);
        let mut conv2 = Conv2d::new(cout, cout, 3, 1, 1, false);
        conv1.init(rng);
        conv2.init(rng);
        let downsample = (stride != 1 || cin != cout).then(|| {
            let mut c = Conv2d::new(cin, cout, 1, stride, 0, false);
            c.init(rng);
            (c, BatchNorm::new(cout))
        });
        Self {
            conv1,
            bn1: BatchNorm::new(cout),
            relu1: Relu::default(),
            conv2,
            bn2: BatchNorm::new(cout),
            downsample,
            relu2: Relu::default(),
        }
    }

    fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let h = relu(self.bn1.forward(self.conv1.forward(x)));
        let mut h = self.bn2.forward(self.conv2.forward(&h));
        match &self.downsample {
            Some((c, b)) => add_assign(&mut h, &b.forward(c.forward(x))),
            None => add_assign(&mut h, x),
        }
        relu(h)
    }

    fn forward_train(&mut self, x: Tensor<S>) -> Tensor<S> {
        let h = self.relu1.forward_train(self.bn1.forward_train(self.conv1.forward_train(x.clone())));
        let mut h = self.bn2.forward_train(self.conv2.forward_train(h));
        match self.downsample.as_mut() {
            Some((c, b)) => add_assign(&mut h, &b.forward_train(c.forward_train(x))),
            None => add_assign(&mut h, &x),
        }
        self.relu2.forward_train(h)
    }

    fn backward(&mut self, g: Tensor<S>) -> Tensor<S> {
        let g = self.relu2.backward(g);
        let mut skip = match self.downsample.as_mut() {
            Some((c, b)) => c.backward(b.backward(g.clone())).expect("downsample propagates gradients"),
            None => g.clone(),
        };
        let h = self.relu1.backward(self.conv2.backward(self.bn2.backward(g)).expect("interior conv"));
        let main = self.conv1.backward(self.bn1.backward(h)).expect("interior conv");
        add_assign(&mut skip, &main);
        skip
    }

    fn visit(&mut self, prefix: &str, f: &mut Visitor<'_, S>) {
        self.conv1.visit(&format!("{prefix}.conv1"), f);
        self.bn1.visit(&format!("{prefix}.bn1"), f);
        self.conv2.visit(&format!("{prefix}.conv2"), f);
        self.bn2.visit(&format!("{prefix}.bn2"), f);
        if let Some((c, b)) = self.downsample.as_mut() {
            c.visit(&format!("{prefix}.downsample.0"), f);
            b.visit(&format!("{prefix}.downsample.1"), f);
        }
    }

    fn clear_cache(&mut self) {
        self.conv1.clear_cache();
        self.bn1.clear_cache();
        self.relu1.clear_cache();
        self.conv2.clear_cache();
        self.bn2.clear_cache();
        self.relu2.clear_cache();
        if let Some((c, b)) = self.downsample.as_mut() {
            c.clear_cache();
            b.clear_cache();
        }
    }
}

fn add_assign<S: Scalar>(a: &mut Tensor<S>, b: &Tensor<S>) {
    assert_eq!(a.shape, b.shape, "residual shapes");
    for (x, &y) in a.data.iter_mut().zip(&b.data) {
        *x += y;
    }
}

pub const IMAGENET_MEAN: [f64; 3] = [0.485, 0.456, 0.406];
pub const IMAGENET_STD: [f64; 3] = [0.229, 0.224, 0.225];

/// 18-layer residual network with torchvision parameter names under
/// `base.`, so ImageNet weights can be imported by name.
#[derive(Debug, Clone)]
pub struct ResNet18<S> {
    conv1: Conv2d<S>,
    bn1: BatchNorm<S>,
    relu: Relu,
    maxpool: MaxPool2d,
    layers: Vec<Vec<BasicBlock<S>>>,
    head: Head<S>,
    pooled_from: Cache<[usize; 4]>,
}

impl<S: Scalar> ResNet18<S> {
    pub fn new(arch: &Architecture, rng: &mut ChaCha8Rng) -> Self {
        assert!(arch.input_size >= 32, "resnet18 input size must be at least 32");
        let mut conv1 = Conv2d::new(3, 64, 7, 2, 3, false);
        conv1.init(rng);
        conv1.input_grad = false;
        let mut layers = Vec::new();
        let mut cin = 64;
        for (i, cout) in [64, 128, 256, 512].into_iter().enumerate() {
            let stride = if i == 0 { 1 } else { 2 };
            layers.push(vec![BasicBlock::new(cin, cout, stride, rng), BasicBlock::new(cout, cout, 1, rng)]);
            cin = cout;
        }
        let mut head = Head::new(512, arch.head_units, arch.classes, arch.dropout);
        head.init(rng);
        Self {
            conv1,
            bn1: BatchNorm::new(64),
            relu: Relu::default(),
            maxpool: MaxPool2d::new(3, 2, 1),
            layers,
            head,
            pooled_from: Cache::default(),
        }
    }

    fn standardize(x: &Tensor<S>) -> Tensor<S> {
        let mut y = x.clone();
        let hw = x.shape[2] * x.shape[3];
        for sample in y.data.chunks_mut(x.sample_len().max(1)) {
            for (c, plane) in sample.chunks_mut(hw).enumerate() {
                let m = S::from_f64_lossy(IMAGENET_MEAN[c % 3]);
                let s = S::from_f64_lossy(1.0 / IMAGENET_STD[c % 3]);
                plane.iter_mut().for_each(|v| *v = (*v - m) * s);
            }
        }
        y
    }

    fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        let h = relu(self.bn1.forward(self.conv1.forward(&Self::standardize(x))));
        let mut h = self.maxpool.forward(&h);
        for block in self.layers.iter().flatten() {
            h = block.forward(&h);
        }
        self.head.forward(global_avg_pool(&h).flatten())
    }

    fn forward_train(&mut self, x: Tensor<S>, dropout_seed: u64) -> Tensor<S> {
        let h = self.conv1.forward_train(Self::standardize(&x));
        let h = self.relu.forward_train(self.bn1.forward_train(h));
        let mut h = self.maxpool.forward_train(h);
        for block in self.layers.iter_mut().flatten() {
            h = block.forward_train(h);
        }
        self.pooled_from.put(h.shape);
        self.head.forward_train(global_avg_pool(&h).flatten(), dropout_seed)
    }

    fn backward(&mut self, g: Tensor<S>) {
        let shape = self.pooled_from.take("resnet18");
        let g = self.head.backward(g);
        let mut g = global_avg_pool_backward(&g, shape);
        for block in self.layers.iter_mut().flatten().rev() {
            g = block.backward(g);
        }
        let g = self.maxpool.backward(g);
        let g = self.bn1.backward(self.relu.backward(g));
        let none = self.conv1.backward(g);
        debug_assert!(none.is_none());
    }

    fn visit(&mut self, f: &mut Visitor<'_, S>) {
        self.conv1.visit("base.conv1", f);
        self.bn1.visit("base.bn1", f);
        for (li, layer) in self.layers.iter_mut().enumerate() {
            for (bi, block) in layer.iter_mut().enumerate() {
                block.visit(&format!("base.layer{}.{bi}", li + 1), f);
            }
        }
        self.head.visit(f);
    }

    fn clear_cache(&mut self) {
        self.conv1.clear_cache();
        self.bn1.clear_cache();
        self.relu.clear_cache();
        self.maxpool.clear_cache();
        self.layers.iter_mut().flatten().for_each(BasicBlock::clear_cache);
        self.head.clear_cache();
        self.pooled_from.clear();
    }
}

/// A network of either backend.
#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Network<S> {
    Reference(ReferenceCnn<S>),
    Resnet18(ResNet18<S>),
}

impl<S: Scalar> Network<S> {
    /// Randomly initialized network; identical seeds give identical weights.
    pub fn new(arch: &Architecture, init_seed: u64) -> Self {
        let mut rng = seed::rng(init_seed);
        match arch.backend {
            Backend::ReferenceCnn => Network::Reference(ReferenceCnn::new(arch, &mut rng)),
            Backend::Resnet18 => Network::Resnet18(ResNet18::new(arch, &mut rng)),
        }
    }

    /// Logits in inference mode.
    pub fn forward(&self, x: &Tensor<S>) -> Tensor<S> {
        match self {
            Network::Reference(n) => n.forward(x),
            Network::Resnet18(n) => n.forward(x),
        }
    }

    /// Logits in training mode; caches activations for [`Network::backward`].
    pub fn forward_train(&mut self, x: Tensor<S>, dropout_seed: u64) -> Tensor<S> {
        match self {
            Network::Reference(n) => n.forward_train(x, dropout_seed),
            Network::Resnet18(n) => n.forward_train(x, dropout_seed),
        }
    }

    /// Accumulates parameter gradients for the given logit gradients.
    pub fn backward(&mut self, grad_logits: Tensor<S>) {
        match self {
            Network::Reference(n) => n.backward(grad_logits),
            Network::Resnet18(n) => n.backward(grad_logits),
        }
    }

    /// Visits every parameter and buffer in a fixed order.
    pub fn visit(&mut self, f: &mut Visitor<'_, S>) {
        match self {
            Network::Reference(n) => n.visit(f),
            Network::Resnet18(n) => n.visit(f),
        }
    }

    pub fn clear_cache(&mut self) {
        match self {
            Network::Reference(n) => n.clear_cache(),
            Network::Resnet18(n) => n.clear_cache(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.visit(&mut |_, slot| {
            if let super::layers::Slot::Param(p) = slot {
                p.zero_grad();
            }
        });
    }

    pub fn parameter_count(&mut self) -> usize {
        let mut n = 0;
        self.visit(&mut |_, slot| {
            if let super::layers::Slot::Param(p) = slot {
                n += p.value.len();
            }
        });
        n
    }
}
