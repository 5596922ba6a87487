//! Reverse-mode differentiation over a recorded sequence of layer applications.
//!
//! A [`Tape`] is built per sample during the forward pass. Leaves (images,
//! cached features) never receive gradients; parameter gradients are
//! returned per bound [`ParamSet`].

use crate::error::{CoreError, Result};
use crate::nn::layers::{Conv2d, Linear};
use crate::nn::params::{Gradients, ParamSet};
use crate::tensor::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SetHandle(usize);

enum Op {
    Leaf,
    Conv {
        set: usize,
        layer: Conv2d,
        input: NodeId,
    },
    Linear {
        set: usize,
        layer: Linear,
        input: NodeId,
    },
    Relu(NodeId),
    Add(NodeId, NodeId),
    MaxPool {
        input: NodeId,
        argmax: Vec<u32>,
    },
    Upsample(NodeId),
    ScaleChannels {
        input: NodeId,
        scales: Vec<f64>,
    },
    Gather(Vec<(NodeId, usize)>),
}

struct Node {
    value: FeatureMap,
    op: Op,
    needs_grad: bool,
}

pub struct Tape<'p> {
    sets: Vec<&'p ParamSet>,
    nodes: Vec<Node>,
}

impl Default for Tape<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self {
            sets: vec![],
            nodes: vec![],
        }
    }

    pub fn bind(&mut self, params: &'p ParamSet) -> SetHandle {
        self.sets.push(params);
        SetHandle(self.sets.len() - 1)
    }

    fn push(&mut self, value: FeatureMap, op: Op, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes[id.0].needs_grad
    }

    pub fn leaf(&mut self, value: FeatureMap) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &FeatureMap {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn conv(&mut self, set: SetHandle, layer: &Conv2d, input: NodeId) -> Result<NodeId> {
        let value = layer.forward(self.sets[set.0], self.value(input))?;
        Ok(self.push(
            value,
            Op::Conv {
                set: set.0,
                layer: layer.clone(),
                input,
            },
            true,
        ))
    }

    pub fn linear(&mut self, set: SetHandle, layer: &Linear, input: NodeId) -> Result<NodeId> {
        let value = layer.forward(self.sets[set.0], self.value(input))?;
        Ok(self.push(
            value,
            Op::Linear {
                set: set.0,
                layer: layer.clone(),
                input,
            },
            true,
        ))
    }

    pub fn relu(&mut self, input: NodeId) -> NodeId {
        let mut value = self.value(input).clone();
        value.data_mut().iter_mut().for_each(|v| *v = v.max(0.0));
        let needs = self.needs(input);
        self.push(value, Op::Relu(input), needs)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(CoreError::Shape(format!(
                "cannot add {:?} and {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        let needs = self.needs(a) || self.needs(b);
        Ok(self.push(value, Op::Add(a, b), needs))
    }

    /// 2×2 max pooling with stride 2. Ties resolve to the first element in
    /// row-major window order.
    pub fn max_pool(&mut self, input: NodeId) -> Result<NodeId> {
        let x = self.value(input);
        let [c, h, w] = x.shape();
        if h < 2 || w < 2 {
            return Err(CoreError::Shape(format!("cannot pool a {h}x{w} map")));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = FeatureMap::zeros(c, oh, ow);
        let mut argmax = vec![0u32; c * oh * ow];
        for ch in 0..c {
            let src = x.channel(ch);
            for oy in 0..oh {
                for ox in 0..ow {
                    let base = 2 * oy * w + 2 * ox;
                    let mut best = base;
                    for cand in [base + 1, base + w, base + w + 1] {
                        if src[cand] > src[best] {
                            best = cand;
                        }
                    }
                    out.set(ch, oy, ox, src[best]);
                    argmax[(ch * oh + oy) * ow + ox] = best as u32;
                }
            }
        }
        let needs = self.needs(input);
        Ok(self.push(out, Op::MaxPool { input, argmax }, needs))
    }

    /// Nearest-neighbour ×2 upsampling.
    pub fn upsample(&mut self, input: NodeId) -> NodeId {
        let x = self.value(input);
        let [c, h, w] = x.shape();
        let mut out = FeatureMap::zeros(c, 2 * h, 2 * w);
        for ch in 0..c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    out.set(ch, y, xx, x.get(ch, y / 2, xx / 2));
                }
            }
        }
        let needs = self.needs(input);
        self.push(out, Op::Upsample(input), needs)
    }

    /// Multiplies channel `i` by the constant `scales[i]`.
    pub fn scale_channels(&mut self, input: NodeId, scales: &[f64]) -> Result<NodeId> {
        let mut value = self.value(input).clone();
        if scales.len() != value.channels() {
            return Err(CoreError::Shape(format!(
                "{} channel scales for a {:?} map",
                scales.len(),
                value.shape()
            )));
        }
        for (ch, &k) in scales.iter().enumerate() {
            value.channel_mut(ch).iter_mut().for_each(|v| *v *= k);
        }
        let needs = self.needs(input);
        Ok(self.push(
            value,
            Op::ScaleChannels {
                input,
                scales: scales.to_vec(),
            },
            needs,
        ))
    }

    /// New map whose channel `i` is channel `sources[i].1` of node
    /// `sources[i].0`. Channel concatenation and regrouping are special cases.
    pub fn gather(&mut self, sources: &[(NodeId, usize)]) -> Result<NodeId> {
        let (first, _) = *sources.first().ok_or(CoreError::Empty("channel gather"))?;
        let (h, w) = (self.value(first).height(), self.value(first).width());
        let mut out = FeatureMap::zeros(sources.len(), h, w);
        let mut needs = false;
        for (i, &(node, ch)) in sources.iter().enumerate() {
            let v = self.value(node);
            if v.height() != h || v.width() != w || ch >= v.channels() {
                return Err(CoreError::Shape(format!(
                    "gather source {i} ({:?}, channel {ch}) incompatible with {h}x{w}",
                    v.shape()
                )));
            }
            out.channel_mut(i).copy_from_slice(v.channel(ch));
            needs |= self.needs(node);
        }
        Ok(self.push(out, Op::Gather(sources.to_vec()), needs))
    }

    pub fn concat(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let sources: Vec<(NodeId, usize)> = parts
            .iter()
            .flat_map(|&p| (0..self.value(p).channels()).map(move |c| (p, c)))
            .collect();
        self.gather(&sources)
    }

    /// Back-propagate the given output gradients; returns one gradient buffer
    /// per bound parameter set, in binding order.
    pub fn backward(&self, seeds: Vec<(NodeId, FeatureMap)>) -> Result<Vec<Gradients>> {
        let mut grads: Vec<Gradients> = self.sets.iter().map(|s| Gradients::zeros_like(s)).collect();
        let mut node_grads: Vec<Option<FeatureMap>> = (0..self.nodes.len()).map(|_| None).collect();
        for (id, g) in seeds {
            if g.shape() != self.value(id).shape() {
                return Err(CoreError::Shape(format!(
                    "seed gradient {:?} does not match node {:?}",
                    g.shape(),
                    self.value(id).shape()
                )));
            }
            accumulate(&mut node_grads, id, g);
        }
        for i in (0..self.nodes.len()).rev() {
            let Some(dy) = node_grads[i].take() else {
                continue;
            };
            let node = &self.nodes[i];
            match &node.op {
                Op::Leaf => {}
                Op::Conv { set, layer, input } => {
                    let need = self.needs(*input);
                    if let Some(dx) =
                        layer.backward(self.sets[*set], self.value(*input), &dy, &mut grads[*set], need)
                    {
                        accumulate(&mut node_grads, *input, dx);
                    }
                }
                Op::Linear { set, layer, input } => {
                    let need = self.needs(*input);
                    if let Some(dx) =
                        layer.backward(self.sets[*set], self.value(*input), &dy, &mut grads[*set], need)
                    {
                        accumulate(&mut node_grads, *input, dx);
                    }
                }
                Op::Relu(input) => {
                    let mut dx = dy;
                    for (d, y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        if *y <= 0.0 {
                            *d = 0.0;
                        }
                    }
                    accumulate(&mut node_grads, *input, dx);
                }
                Op::Add(a, b) => {
                    if self.needs(*b) {
                        accumulate(&mut node_grads, *b, dy.clone());
                    }
                    if self.needs(*a) {
                        accumulate(&mut node_grads, *a, dy);
                    }
                }
                Op::MaxPool { input, argmax } => {
                    let x = self.value(*input);
                    let [c, h, w] = x.shape();
                    let mut dx = FeatureMap::zeros(c, h, w);
                    let per = dy.plane();
                    for ch in 0..c {
                        let src = dy.channel(ch);
                        let dst = dx.channel_mut(ch);
                        for (k, g) in src.iter().enumerate() {
                            dst[argmax[ch * per + k] as usize] += g;
                        }
                    }
                    accumulate(&mut node_grads, *input, dx);
                }
                Op::Upsample(input) => {
                    let [c, h, w] = self.value(*input).shape();
                    let mut dx = FeatureMap::zeros(c, h, w);
                    for ch in 0..c {
                        for y in 0..2 * h {
                            for x in 0..2 * w {
                                let v = dx.get(ch, y / 2, x / 2) + dy.get(ch, y, x);
                                dx.set(ch, y / 2, x / 2, v);
                            }
                        }
                    }
                    accumulate(&mut node_grads, *input, dx);
                }
                Op::ScaleChannels { input, scales } => {
                    let mut dx = dy;
                    for (ch, &k) in scales.iter().enumerate() {
                        dx.channel_mut(ch).iter_mut().for_each(|v| *v *= k);
                    }
                    accumulate(&mut node_grads, *input, dx);
                }
                Op::Gather(sources) => {
                    for (i, &(src, ch)) in sources.iter().enumerate() {
                        if !self.needs(src) {
                            continue;
                        }
                        let [c, h, w] = self.value(src).shape();
                        let slot = node_grads[src.0].get_or_insert_with(|| FeatureMap::zeros(c, h, w));
                        for (a, b) in slot.channel_mut(ch).iter_mut().zip(dy.channel(i)) {
                            *a += b;
                        }
                    }
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate(node_grads: &mut [Option<FeatureMap>], id: NodeId, g: FeatureMap) {
    match &mut node_grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::layers::Residual;
    use crate::nn::params::Initializer;

    fn ramp(c: usize, h: usize, w: usize) -> FeatureMap {
        let n = c * h * w;
        FeatureMap::from_vec(c, h, w, (0..n).map(|i| ((i * 37) % 17) as f64 / 9.0 - 0.8).collect()).unwrap()
    }

    /// Scalar objective: weighted sum of the output, so dL/dy = weights.
    fn check_params(build: impl Fn(&mut Tape<'_>, SetHandle) -> NodeId, params: &ParamSet) {
        let mut tape = Tape::new();
        let h = tape.bind(params);
        let out = build(&mut tape, h);
        let shape = tape.value(out).shape();
        let weights = ramp(shape[0], shape[1], shape[2]);
        let objective = |t: &Tape<'_>, o: NodeId| -> f64 {
            t.value(o).data().iter().zip(weights.data()).map(|(a, b)| a * b).sum()
        };
        let grads = tape.backward(vec![(out, weights.clone())]).unwrap();
        let eps = 1e-6;
        for (pi, p) in params.entries().iter().enumerate() {
            for k in (0..p.values.len()).step_by(1 + p.values.len() / 7) {
                let mut plus = params.clone();
                plus.entries_mut()[pi].values[k] += eps;
                let mut minus = params.clone();
                minus.entries_mut()[pi].values[k] -= eps;
                let eval = |ps: &ParamSet| {
                    let mut t = Tape::new();
                    let hh = t.bind(ps);
                    let o = build(&mut t, hh);
                    objective(&t, o)
                };
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * eps);
                let an = grads[0].arrays()[pi][k];
                let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-3);
                assert!(err < 1e-5, "{}[{k}]: fd {fd} analytic {an}", p.name);
            }
        }
    }

    #[test]
    fn conv_matches_direct_sum() {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(3);
        let conv = Conv2d::new(&mut ps, &mut init, "c", 2, 3, 3, 2, 1);
        ps.get_mut(conv.bias).copy_from_slice(&[0.1, -0.2, 0.3]);
        let x = ramp(2, 5, 6);
        let y = conv.forward(&ps, &x).unwrap();
        assert_eq!(y.shape(), [3, 3, 3]);
        let w = ps.get(conv.weight);
        for o in 0..3 {
            for oy in 0..3 {
                for ox in 0..3 {
                    let mut s = ps.get(conv.bias)[o];
                    for c in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..3 {
                                let iy = (oy * 2 + ky) as isize - 1;
                                let ix = (ox * 2 + kx) as isize - 1;
                                if iy >= 0 && iy < 5 && ix >= 0 && ix < 6 {
                                    s += w[((o * 2 + c) * 3 + ky) * 3 + kx] * x.get(c, iy as usize, ix as usize);
                                }
                            }
                        }
                    }
                    assert!((s - y.get(o, oy, ox)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn gradients_of_composite_graph() {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(11);
        let stem = Conv2d::new(&mut ps, &mut init, "stem", 2, 4, 3, 1, 1);
        let res = Residual::new(&mut ps, &mut init, "res", 4, 6);
        let down = Conv2d::new(&mut ps, &mut init, "down", 6, 3, 2, 2, 0);
        let fc = Linear::new(&mut ps, &mut init, "fc", 3 * 2 * 2, 5, 1.0);
        // zero biases would park pre-activations exactly on the ReLU kink
        for p in ps.entries_mut().iter_mut().filter(|p| p.name.ends_with("bias")) {
            for (i, v) in p.values.iter_mut().enumerate() {
                *v = 0.05 * ((i as f64) * 1.37 + 0.4).sin();
            }
        }
        let x = ramp(2, 8, 8);
        let build = |t: &mut Tape<'_>, h: SetHandle| {
            let xin = t.leaf(x.clone());
            let a = t.conv(h, &stem, xin).unwrap();
            let b = res.apply(t, h, a).unwrap();
            let up = t.upsample(b);
            let p = t.max_pool(up).unwrap();
            let s = t.add(p, b).unwrap();
            let s = t.scale_channels(s, &[0.5, 2.0, -1.0, 1.5, 3.0, 0.25]).unwrap();
            let g = t.gather(&[(s, 5), (s, 0), (a, 2), (s, 3), (b, 1), (a, 0)]).unwrap();
            let d = t.conv(h, &down, g).unwrap();
            let d = t.relu(d);
            let pooled = t.max_pool(d).unwrap();
            t.linear(h, &fc, pooled).unwrap()
        };
        check_params(build, &ps);
    }

    #[test]
    fn leaves_receive_no_gradient_work() {
        let mut ps = ParamSet::new();
        let mut init = Initializer::new(1);
        let conv = Conv2d::new(&mut ps, &mut init, "c", 1, 1, 1, 1, 0);
        let mut t = Tape::new();
        let h = t.bind(&ps);
        let x = t.leaf(ramp(1, 2, 2));
        let r = t.relu(x);
        assert!(!t.needs(r));
        let y = t.conv(h, &conv, r).unwrap();
        assert!(t.needs(y));
        let g = t.backward(vec![(y, FeatureMap::from_vec(1, 2, 2, vec![1.0; 4]).unwrap())]).unwrap();
        assert_eq!(g[0].get(conv.bias), &[4.0]);
    }
}
