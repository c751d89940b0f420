use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use super::batch::Batch;
use super::{term_coefficients, LossTerms, LossWeights};
use crate::autodiff::{argmax, gru_step, project_inputs, Bound, Graph, GruWeights, ParamGroup, ParamId, ParamStore, Tensor, Var};
use crate::error::{Error, Result};
use crate::text::{word_dropout, BOS, EOS, NUM_RESERVED, PAD, UNK};

/// Half-width of the uniform weight initialization.
pub const DEFAULT_INIT_SCALE: f64 = 0.08;

/// Layer sizes. `hidden_dim` is the encoder width and must be even so it
/// splits into the semantic and syntactic halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelDims {
    pub vocab_size: usize,
    pub syntax_vocab_size: usize,
    pub embed_dim: usize,
    pub hidden_dim: usize,
    pub latent_dim: usize,
    pub decoder_dim: usize,
}

impl ModelDims {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("embed_dim", self.embed_dim),
            ("hidden_dim", self.hidden_dim),
            ("latent_dim", self.latent_dim),
            ("decoder_dim", self.decoder_dim),
        ];
        for (name, v) in named {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.hidden_dim % 2 != 0 {
            return Err(Error::Config(format!(
                "hidden_dim {} must be even to split into two spaces",
                self.hidden_dim
            )));
        }
        if self.vocab_size <= NUM_RESERVED || self.syntax_vocab_size <= NUM_RESERVED {
            return Err(Error::Config("vocabularies must hold at least one non-reserved entry".into()));
        }
        Ok(())
    }
}

/// Diagonal Gaussian over one latent space.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianPosterior {
    pub mu: Vec<f64>,
    pub log_sigma: Vec<f64>,
}

impl GaussianPosterior {
    pub fn sigma(&self) -> Vec<f64> {
        self.log_sigma.iter().map(|v| v.exp()).collect()
    }
}

/// A point in both latent spaces.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentPair {
    pub z_sem: Vec<f64>,
    pub z_syn: Vec<f64>,
}

impl LatentPair {
    pub fn means(sem: &GaussianPosterior, syn: &GaussianPosterior) -> Self {
        Self {
            z_sem: sem.mu.clone(),
            z_syn: syn.mu.clone(),
        }
    }

    /// `[z_sem; z_syn]`, the order used by every decoder.
    pub fn concat(&self) -> Vec<f64> {
        let mut z = self.z_sem.clone();
        z.extend_from_slice(&self.z_syn);
        z
    }
}

/// Posterior parameters for a batch, each `[B, latent]`.
#[derive(Clone, Copy, Debug)]
pub struct LatentVars {
    pub mu_sem: Var,
    pub log_sigma_sem: Var,
    pub mu_syn: Var,
    pub log_sigma_syn: Var,
}

/// Graph handles of the nine objective terms.
#[derive(Clone, Copy, Debug)]
pub struct TermVars {
    pub nll: Var,
    pub kl_sem: Var,
    pub kl_syn: Var,
    pub mul_sem: Var,
    pub mul_syn: Var,
    pub adv_sem: Var,
    pub adv_syn: Var,
    pub rec_sem: Var,
    pub rec_syn: Var,
}

impl TermVars {
    fn all(&self) -> [Var; 9] {
        [
            self.nll,
            self.kl_sem,
            self.kl_syn,
            self.mul_sem,
            self.mul_syn,
            self.adv_sem,
            self.adv_syn,
            self.rec_sem,
            self.rec_syn,
        ]
    }

    pub fn values(&self, g: &Graph) -> LossTerms {
        let v = |x: Var| g.value(x).item();
        LossTerms {
            nll: v(self.nll),
            kl_sem: v(self.kl_sem),
            kl_syn: v(self.kl_syn),
            mul_sem: v(self.mul_sem),
            mul_syn: v(self.mul_syn),
            adv_sem: v(self.adv_sem),
            adv_syn: v(self.adv_syn),
            rec_sem: v(self.rec_sem),
            rec_syn: v(self.rec_syn),
        }
    }
}

/// Training losses of the four adversaries (batch means, all ≥ 0).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AdversaryLosses {
    /// Bag of words predicted from `z_syn`.
    pub bow: f64,
    /// Linearized tree predicted from `z_sem`.
    pub syntax: f64,
    /// Sentence decoded from `z_sem` alone.
    pub rec_sem: f64,
    /// Sentence decoded from `z_syn` alone.
    pub rec_syn: f64,
}

#[derive(Clone, Copy, Debug)]
struct AdversaryVars {
    bow: Var,
    syntax: Var,
    rec_sem: Var,
    rec_syn: Var,
}

impl AdversaryVars {
    fn values(&self, g: &Graph) -> AdversaryLosses {
        AdversaryLosses {
            bow: g.value(self.bow).item(),
            syntax: g.value(self.syntax).item(),
            rec_sem: g.value(self.rec_sem).item(),
            rec_syn: g.value(self.rec_syn).item(),
        }
    }
}

/// A recorded forward pass ready for [`Graph::backward`].
pub struct Forward {
    pub graph: Graph,
    pub bound: Bound,
    pub loss: Var,
    pub terms: LossTerms,
    pub adversary: AdversaryLosses,
}

/// Stochastic parts of a training forward pass.
pub struct Noise<'r> {
    pub gru_dropout: f64,
    pub word_dropout: f64,
    pub rng: &'r mut dyn RngCore,
}

#[derive(Clone, Copy, Debug)]
struct GruIds {
    w_x: ParamId,
    w_h: ParamId,
    w_hc: ParamId,
    bias: ParamId,
}

impl GruIds {
    fn bind(&self, b: &Bound) -> GruWeights {
        GruWeights {
            w_x: b[self.w_x],
            w_h: b[self.w_h],
            w_hc: b[self.w_hc],
            bias: b[self.bias],
        }
    }
}

#[derive(Clone, Copy, Debug)]
struct Affine {
    w: ParamId,
    b: Option<ParamId>,
}

#[derive(Clone, Copy, Debug)]
struct Head {
    hidden: Affine,
    out: Affine,
}

/// GRU decoder started from a latent vector.
#[derive(Clone, Copy, Debug)]
struct SeqDecoder {
    emb: ParamId,
    init: Option<Affine>,
    gru: GruIds,
    out: Affine,
}

struct Builder<'a> {
    store: ParamStore,
    init: &'a mut dyn FnMut(&[usize]) -> Tensor,
}

impl Builder<'_> {
    fn weight(&mut self, name: &str, group: ParamGroup, shape: &[usize]) -> ParamId {
        let t = (self.init)(shape);
        self.store.add(name, group, t)
    }

    fn bias(&mut self, name: &str, group: ParamGroup, len: usize) -> ParamId {
        self.store.add(name, group, Tensor::zeros(&[len]))
    }

    fn affine(&mut self, name: &str, group: ParamGroup, input: usize, output: usize, bias: bool) -> Affine {
        let w = self.weight(&format!("{name}.w"), group, &[input, output]);
        let b = bias.then(|| self.bias(&format!("{name}.b"), group, output));
        Affine { w, b }
    }

    fn gru(&mut self, name: &str, group: ParamGroup, input: usize, hidden: usize) -> GruIds {
        GruIds {
            w_x: self.weight(&format!("{name}.w_x"), group, &[input, 3 * hidden]),
            w_h: self.weight(&format!("{name}.w_h"), group, &[hidden, 2 * hidden]),
            w_hc: self.weight(&format!("{name}.w_hc"), group, &[hidden, hidden]),
            bias: self.bias(&format!("{name}.bias"), group, 3 * hidden),
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn decoder(
        &mut self,
        name: &str,
        group: ParamGroup,
        emb: Option<ParamId>,
        emb_rows: usize,
        embed_dim: usize,
        latent: usize,
        width: usize,
        out_size: usize,
    ) -> SeqDecoder {
        let emb = emb.unwrap_or_else(|| self.weight(&format!("{name}.emb"), group, &[emb_rows, embed_dim]));
        let init = (latent != width).then(|| self.affine(&format!("{name}.init"), group, latent, width, true));
        let gru = self.gru(&format!("{name}.gru"), group, embed_dim, width);
        let out = self.affine(&format!("{name}.out"), group, width, out_size, true);
        SeqDecoder { emb, init, gru, out }
    }
}

/// Parameters and forward computations of the model.
#[derive(Clone, Debug)]
pub struct DssVae {
    dims: ModelDims,
    store: ParamStore,
    word_emb: ParamId,
    encoder: GruIds,
    sem_head: Head,
    syn_head: Head,
    rec: SeqDecoder,
    bow: Affine,
    syntax: SeqDecoder,
    adv_bow: Affine,
    adv_syntax: SeqDecoder,
    adv_rec_sem: SeqDecoder,
    adv_rec_syn: SeqDecoder,
}

impl DssVae {
    /// Weights uniform in `[-0.08, 0.08]`, biases zero. Values are rounded
    /// to single precision, as after every optimizer step.
    pub fn new<R: Rng + ?Sized>(dims: ModelDims, rng: &mut R) -> Result<Self> {
        Self::with_init_scale(dims, DEFAULT_INIT_SCALE, rng)
    }

    /// As [`DssVae::new`] with weights uniform in `[-scale, scale]`.
    pub fn with_init_scale<R: Rng + ?Sized>(dims: ModelDims, scale: f64, rng: &mut R) -> Result<Self> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(Error::Config(format!("init_scale must be positive, got {scale}")));
        }
        let mut m = Self::build(dims, &mut |shape| Tensor::uniform(shape, scale, rng))?;
        let ids: Vec<ParamId> = m.store.ids().collect();
        m.store.snap_to_f32(&ids);
        Ok(m)
    }

    /// Every parameter zero.
    pub fn zeroed(dims: ModelDims) -> Result<Self> {
        Self::build(dims, &mut |shape| Tensor::zeros(shape))
    }

    fn build(dims: ModelDims, init: &mut dyn FnMut(&[usize]) -> Tensor) -> Result<Self> {
        use ParamGroup::{Adversary, Main};
        dims.validate()?;
        let ModelDims {
            vocab_size: v,
            syntax_vocab_size: sv,
            embed_dim: e,
            hidden_dim: h,
            latent_dim: dz,
            decoder_dim: d,
        } = dims;
        let half = h / 2;
        let mut bl = Builder {
            store: ParamStore::new(),
            init,
        };
        let word_emb = bl.weight("word_emb", Main, &[v, e]);
        let encoder = bl.gru("encoder", Main, e, h);
        let head = |bl: &mut Builder, name: &str| Head {
            hidden: bl.affine(&format!("{name}.hidden"), Main, half, half, true),
            out: bl.affine(&format!("{name}.out"), Main, half, 2 * dz, false),
        };
        let sem_head = head(&mut bl, "sem_head");
        let syn_head = head(&mut bl, "syn_head");
        let rec = bl.decoder("rec", Main, Some(word_emb), v, e, 2 * dz, d, v);
        let bow = bl.affine("bow", Main, dz, v, true);
        let syntax = bl.decoder("syntax", Main, None, sv, e, dz, d, sv);
        let adv_bow = bl.affine("adv_bow", Adversary, dz, v, true);
        let adv_syntax = bl.decoder("adv_syntax", Adversary, None, sv, e, dz, d, sv);
        let adv_rec_sem = bl.decoder("adv_rec_sem", Adversary, None, v, e, dz, d, v);
        let adv_rec_syn = bl.decoder("adv_rec_syn", Adversary, None, v, e, dz, d, v);
        Ok(Self {
            dims,
            store: bl.store,
            word_emb,
            encoder,
            sem_head,
            syn_head,
            rec,
            bow,
            syntax,
            adv_bow,
            adv_syntax,
            adv_rec_sem,
            adv_rec_syn,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Current parameter values in id order, e.g. as gradient-check inputs.
    pub fn param_tensors(&self) -> Vec<Tensor> {
        self.store.ids().map(|id| self.store.get(id).clone()).collect()
    }

    fn affine(&self, g: &mut Graph, b: &Bound, a: &Affine, x: Var) -> Result<Var> {
        let y = g.matmul(x, b[a.w])?;
        match a.b {
            Some(bias) => g.add_bias(y, b[bias]),
            None => Ok(y),
        }
    }

    fn head(&self, g: &mut Graph, b: &Bound, head: &Head, r: Var) -> Result<(Var, Var)> {
        let dz = self.dims.latent_dim;
        let pre = self.affine(g, b, &head.hidden, r)?;
        let hidden = g.relu(pre);
        let out = self.affine(g, b, &head.out, hidden)?;
        Ok((g.slice_cols(out, 0, dz)?, g.slice_cols(out, dz, dz)?))
    }

    /// Encode a batch of word sequences into both posteriors.
    pub fn encode_vars(&self, g: &mut Graph, b: &Bound, words: &[&[usize]], mut noise: Option<&mut Noise>) -> Result<LatentVars> {
        if words.is_empty() || words.iter().any(|w| w.is_empty()) {
            return Err(Error::Input("cannot encode an empty sentence".into()));
        }
        let bsz = words.len();
        let h = self.dims.hidden_dim;
        let (ids, t_max) = time_major(words);
        let x = g.gather(b[self.word_emb], &ids)?;
        let x = embed_dropout(g, x, noise.as_deref_mut())?;
        let gru = self.encoder.bind(b);
        let xw = project_inputs(g, x, &gru)?;
        let mut state = g.constant(Tensor::zeros(&[bsz, h]));
        for t in 0..t_max {
            let xw_t = g.slice_rows(xw, t * bsz, bsz)?;
            let next = gru_step(g, xw_t, state, &gru)?;
            let mask: Vec<bool> = words.iter().map(|w| t < w.len()).collect();
            state = if mask.iter().all(|&m| m) {
                next
            } else {
                g.select_rows(&mask, next, state)?
            };
        }
        let r_sem = g.slice_cols(state, 0, h / 2)?;
        let r_syn = g.slice_cols(state, h / 2, h / 2)?;
        let (mu_sem, log_sigma_sem) = self.head(g, b, &self.sem_head, r_sem)?;
        let (mu_syn, log_sigma_syn) = self.head(g, b, &self.syn_head, r_syn)?;
        Ok(LatentVars {
            mu_sem,
            log_sigma_sem,
            mu_syn,
            log_sigma_syn,
        })
    }

    /// `(z_sem, z_syn)`: posterior means when `eps` is `None`, otherwise
    /// `μ + σ ⊙ ε` with `eps = [ε_sem, ε_syn]`, each `[B, latent]`.
    pub fn latent(&self, g: &mut Graph, lv: &LatentVars, eps: Option<&[Tensor; 2]>) -> Result<(Var, Var)> {
        match eps {
            None => Ok((lv.mu_sem, lv.mu_syn)),
            Some([e_sem, e_syn]) => Ok((
                crate::autodiff::reparameterize_var(g, lv.mu_sem, lv.log_sigma_sem, e_sem.clone())?,
                crate::autodiff::reparameterize_var(g, lv.mu_syn, lv.log_sigma_syn, e_syn.clone())?,
            )),
        }
    }

    /// Teacher-forced NLL of `targets` given `inputs`, summed over tokens and
    /// averaged over the batch rows.
    #[allow(clippy::too_many_arguments)]
    fn seq_nll(
        &self,
        g: &mut Graph,
        b: &Bound,
        dec: &SeqDecoder,
        z: Var,
        inputs: &[Vec<usize>],
        targets: &[Vec<usize>],
        noise: Option<&mut Noise>,
    ) -> Result<Var> {
        let bsz = inputs.len();
        if g.value(z).rows() != bsz || targets.len() != bsz {
            return Err(Error::Shape("decoder batch mismatch".into()));
        }
        let h0 = match &dec.init {
            Some(a) => self.affine(g, b, a, z)?,
            None => z,
        };
        let in_refs: Vec<&[usize]> = inputs.iter().map(Vec::as_slice).collect();
        let (ids, t_max) = time_major(&in_refs);
        let x = g.gather(b[dec.emb], &ids)?;
        let x = embed_dropout(g, x, noise)?;
        let gru = dec.gru.bind(b);
        let xw = project_inputs(g, x, &gru)?;
        let mut state = h0;
        let mut outs = Vec::with_capacity(t_max);
        for t in 0..t_max {
            let xw_t = g.slice_rows(xw, t * bsz, bsz)?;
            state = gru_step(g, xw_t, state, &gru)?;
            outs.push(state);
        }
        let hs = if outs.len() == 1 { outs[0] } else { g.concat_rows(&outs)? };
        let logits = self.affine(g, b, &dec.out, hs)?;
        let mut tgt = vec![PAD; t_max * bsz];
        let mut weights = vec![0.0; t_max * bsz];
        let w = 1.0 / bsz as f64;
        for (r, (inp, out)) in inputs.iter().zip(targets).enumerate() {
            if inp.len() != out.len() {
                return Err(Error::Shape("decoder inputs and targets differ in length".into()));
            }
            for (t, &y) in out.iter().enumerate() {
                tgt[t * bsz + r] = y;
                weights[t * bsz + r] = w;
            }
        }
        g.cross_entropy(logits, &tgt, &weights)
    }

    /// Reconstruction NLL from `[z_sem; z_syn]`; word dropout applies to
    /// the decoder inputs when `noise` is given.
    pub fn reconstruction_nll_var(
        &self,
        g: &mut Graph,
        b: &Bound,
        z_sem: Var,
        z_syn: Var,
        words: &[&[usize]],
        mut noise: Option<&mut Noise>,
    ) -> Result<Var> {
        let z = g.concat_cols(&[z_sem, z_syn])?;
        let mut inputs = Vec::with_capacity(words.len());
        for w in words {
            let body = match noise.as_deref_mut() {
                Some(n) if n.word_dropout > 0.0 => word_dropout(w, n.word_dropout, n.rng),
                _ => w.to_vec(),
            };
            inputs.push(shift_right(&body));
        }
        let targets: Vec<Vec<usize>> = words.iter().map(|w| with_eos(w)).collect();
        self.seq_nll(g, b, &self.rec, z, &inputs, &targets, noise)
    }

    /// `(L_mul_sem, L_mul_syn)`: bag-of-words cross-entropy from `z_sem` and
    /// linearized-tree NLL from `z_syn`.
    pub fn multitask_vars(
        &self,
        g: &mut Graph,
        b: &Bound,
        z_sem: Var,
        z_syn: Var,
        batch: &Batch,
        noise: Option<&mut Noise>,
    ) -> Result<(Var, Var)> {
        let mul_sem = self.bow_loss(g, b, &self.bow, z_sem, batch)?;
        let (inputs, targets) = syntax_io(batch);
        let mul_syn = self.seq_nll(g, b, &self.syntax, z_syn, &inputs, &targets, noise)?;
        Ok((mul_sem, mul_syn))
    }

    fn bow_loss(&self, g: &mut Graph, b: &Bound, head: &Affine, z: Var, batch: &Batch) -> Result<Var> {
        let logits = self.affine(g, b, head, z)?;
        let targets = Tensor::matrix(batch.len(), self.dims.vocab_size, batch.bow_rows())?;
        let total = g.soft_cross_entropy(logits, targets)?;
        Ok(g.scale(total, 1.0 / batch.len() as f64))
    }

    fn adversary_vars(&self, g: &mut Graph, b: &Bound, z_sem: Var, z_syn: Var, batch: &Batch) -> Result<AdversaryVars> {
        let bow = self.bow_loss(g, b, &self.adv_bow, z_syn, batch)?;
        let (s_in, s_out) = syntax_io(batch);
        let syntax = self.seq_nll(g, b, &self.adv_syntax, z_sem, &s_in, &s_out, None)?;
        let words = batch.words();
        let w_in: Vec<Vec<usize>> = words.iter().map(|w| shift_right(w)).collect();
        let w_out: Vec<Vec<usize>> = words.iter().map(|w| with_eos(w)).collect();
        let rec_sem = self.seq_nll(g, b, &self.adv_rec_sem, z_sem, &w_in, &w_out, None)?;
        let rec_syn = self.seq_nll(g, b, &self.adv_rec_syn, z_syn, &w_in, &w_out, None)?;
        Ok(AdversaryVars {
            bow,
            syntax,
            rec_sem,
            rec_syn,
        })
    }

    /// Training losses of the four adversaries. `z_sem` and `z_syn` must be
    /// cut off from the main network.
    pub fn adversary_losses(&self, g: &mut Graph, b: &Bound, z_sem: Var, z_syn: Var, batch: &Batch) -> Result<AdversaryLosses> {
        if g.requires_grad(z_sem) || g.requires_grad(z_syn) {
            return Err(Error::Contract("adversaries must be trained on detached latents".into()));
        }
        Ok(self.adversary_vars(g, b, z_sem, z_syn, batch)?.values(g))
    }

    /// Phase A: the adversaries learn from detached latents. Main parameters
    /// enter the graph as constants.
    pub fn adversary_forward(&self, batch: &Batch, eps: &[Tensor; 2]) -> Result<Forward> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g, |grp| grp == ParamGroup::Adversary);
        let lv = self.encode_vars(&mut g, &bound, &batch.words(), None)?;
        let (z_sem, z_syn) = self.latent(&mut g, &lv, Some(eps))?;
        let (z_sem, z_syn) = (g.detach(z_sem), g.detach(z_syn));
        if g.requires_grad(z_sem) || g.requires_grad(z_syn) {
            return Err(Error::Contract("adversaries must be trained on detached latents".into()));
        }
        let adv = self.adversary_vars(&mut g, &bound, z_sem, z_syn, batch)?;
        let loss = g.weighted_sum(&[(adv.bow, 1.0), (adv.syntax, 1.0), (adv.rec_sem, 1.0), (adv.rec_syn, 1.0)])?;
        let adversary = adv.values(&g);
        Ok(Forward {
            graph: g,
            bound,
            loss,
            terms: LossTerms::default(),
            adversary,
        })
    }

    /// The nine terms and their weighted sum. Adversarial terms are the
    /// negated adversary NLLs, so minimising them confuses the adversaries.
    #[allow(clippy::too_many_arguments)]
    pub fn main_loss(
        &self,
        g: &mut Graph,
        b: &Bound,
        batch: &Batch,
        eps: Option<&[Tensor; 2]>,
        weights: &LossWeights,
        kl: [f64; 2],
        mut noise: Option<&mut Noise>,
    ) -> Result<(Var, TermVars)> {
        weights.validate()?;
        let words = batch.words();
        let lv = self.encode_vars(g, b, &words, noise.as_deref_mut())?;
        let (z_sem, z_syn) = self.latent(g, &lv, eps)?;
        let nll = self.reconstruction_nll_var(g, b, z_sem, z_syn, &words, noise.as_deref_mut())?;
        let inv_b = 1.0 / batch.len() as f64;
        let kl_sem = g.kl_standard_gaussian(lv.mu_sem, lv.log_sigma_sem)?;
        let kl_sem = g.scale(kl_sem, inv_b);
        let kl_syn = g.kl_standard_gaussian(lv.mu_syn, lv.log_sigma_syn)?;
        let kl_syn = g.scale(kl_syn, inv_b);
        let (mul_sem, mul_syn) = self.multitask_vars(g, b, z_sem, z_syn, batch, noise.as_deref_mut())?;
        let adv = self.adversary_vars(g, b, z_sem, z_syn, batch)?;
        let terms = TermVars {
            nll,
            kl_sem,
            kl_syn,
            mul_sem,
            mul_syn,
            adv_sem: g.scale(adv.bow, -1.0),
            adv_syn: g.scale(adv.syntax, -1.0),
            rec_sem: g.scale(adv.rec_sem, -1.0),
            rec_syn: g.scale(adv.rec_syn, -1.0),
        };
        let coef = term_coefficients(weights, kl);
        let parts: Vec<(Var, f64)> = terms.all().into_iter().zip(coef).filter(|(_, c)| *c != 0.0).collect();
        let loss = g.weighted_sum(&parts)?;
        Ok((loss, terms))
    }

    /// Phase B: main parameters are trainable, adversaries frozen.
    pub fn main_forward(
        &self,
        batch: &Batch,
        eps: &[Tensor; 2],
        weights: &LossWeights,
        kl: [f64; 2],
        noise: Option<&mut Noise>,
    ) -> Result<Forward> {
        let mut g = Graph::new();
        let bound = self.store.bind(&mut g, |grp| grp == ParamGroup::Main);
        let (loss, terms) = self.main_loss(&mut g, &bound, batch, Some(eps), weights, kl, noise)?;
        let terms = terms.values(&g);
        Ok(Forward {
            graph: g,
            bound,
            loss,
            terms,
            adversary: AdversaryLosses::default(),
        })
    }

    /// Σ over sentences of reconstruction NLL at the posterior mean plus both
    /// closed-form KL terms (a negated ELBO).
    pub fn negative_elbo_sum(&self, batch: &Batch) -> Result<f64> {
        let mut g = Graph::new();
        let b = self.store.bind(&mut g, |_| false);
        let words = batch.words();
        let lv = self.encode_vars(&mut g, &b, &words, None)?;
        let nll = self.reconstruction_nll_var(&mut g, &b, lv.mu_sem, lv.mu_syn, &words, None)?;
        let kl_sem = g.kl_standard_gaussian(lv.mu_sem, lv.log_sigma_sem)?;
        let kl_syn = g.kl_standard_gaussian(lv.mu_syn, lv.log_sigma_syn)?;
        Ok(g.value(nll).item() * batch.len() as f64 + g.value(kl_sem).item() + g.value(kl_syn).item())
    }

    /// Posterior parameters for each sentence.
    pub fn encode_batch(&self, words: &[&[usize]]) -> Result<Vec<(GaussianPosterior, GaussianPosterior)>> {
        let mut g = Graph::new();
        let b = self.store.bind(&mut g, |_| false);
        let lv = self.encode_vars(&mut g, &b, words, None)?;
        let row = |v: Var, r: usize| g.value(v).row(r).to_vec();
        Ok((0..words.len())
            .map(|r| {
                (
                    GaussianPosterior {
                        mu: row(lv.mu_sem, r),
                        log_sigma: row(lv.log_sigma_sem, r),
                    },
                    GaussianPosterior {
                        mu: row(lv.mu_syn, r),
                        log_sigma: row(lv.log_sigma_syn, r),
                    },
                )
            })
            .collect())
    }

    pub fn encode(&self, words: &[usize]) -> Result<(GaussianPosterior, GaussianPosterior)> {
        Ok(self.encode_batch(&[words])?.remove(0))
    }

    /// Reconstruction NLL of one sentence from a fixed latent pair.
    pub fn reconstruction_nll<R: Rng>(&self, z: &LatentPair, target: &[usize], dropout_p: f64, rng: &mut R) -> Result<f64> {
        self.check_latent(z)?;
        let mut g = Graph::new();
        let b = self.store.bind(&mut g, |_| false);
        let z_sem = g.constant(Tensor::matrix(1, z.z_sem.len(), z.z_sem.clone())?);
        let z_syn = g.constant(Tensor::matrix(1, z.z_syn.len(), z.z_syn.clone())?);
        let mut noise = Noise {
            gru_dropout: 0.0,
            word_dropout: dropout_p,
            rng,
        };
        let nll = self.reconstruction_nll_var(&mut g, &b, z_sem, z_syn, &[target], Some(&mut noise))?;
        Ok(g.value(nll).item())
    }

    fn check_latent(&self, z: &LatentPair) -> Result<()> {
        let dz = self.dims.latent_dim;
        if z.z_sem.len() != dz || z.z_syn.len() != dz {
            return Err(Error::Shape(format!(
                "latent pair of sizes ({}, {}), model expects {dz}",
                z.z_sem.len(),
                z.z_syn.len()
            )));
        }
        Ok(())
    }

    /// Greedy decoding from `[z_sem; z_syn]`: at each step the most probable
    /// non-reserved token (ties to the lowest id), stopping at `</s>` or after
    /// `max_len` tokens. Returned sequences exclude the terminator.
    pub fn decode_greedy(&self, latents: &[LatentPair], max_len: usize) -> Result<Vec<Vec<usize>>> {
        if max_len == 0 {
            return Err(Error::Input("max_len must be at least 1".into()));
        }
        if latents.is_empty() {
            return Ok(Vec::new());
        }
        for z in latents {
            self.check_latent(z)?;
        }
        let bsz = latents.len();
        let width = 2 * self.dims.latent_dim;
        let mut g = Graph::new();
        let b = self.store.bind(&mut g, |_| false);
        let z: Vec<f64> = latents.iter().flat_map(LatentPair::concat).collect();
        let z = g.constant(Tensor::matrix(bsz, width, z)?);
        let mut state = match &self.rec.init {
            Some(a) => self.affine(&mut g, &b, a, z)?,
            None => z,
        };
        let gru = self.rec.gru.bind(&b);
        let mut prev = vec![BOS; bsz];
        let mut done = vec![false; bsz];
        let mut out = vec![Vec::new(); bsz];
        for _ in 0..max_len {
            let x = g.gather(b[self.word_emb], &prev)?;
            let xw = project_inputs(&mut g, x, &gru)?;
            state = gru_step(&mut g, xw, state, &gru)?;
            let logits = self.affine(&mut g, &b, &self.rec.out, state)?;
            for r in 0..bsz {
                if done[r] {
                    continue;
                }
                let tok = best_output_token(g.value(logits).row(r));
                if tok == EOS {
                    done[r] = true;
                } else {
                    out[r].push(tok);
                    prev[r] = tok;
                }
            }
            if done.iter().all(|&d| d) {
                break;
            }
        }
        Ok(out)
    }
}

/// Argmax over tokens that may appear in output: `</s>` and every
/// non-reserved id.
fn best_output_token(logits: &[f64]) -> usize {
    let mut masked = logits.to_vec();
    for id in [PAD, BOS, UNK] {
        masked[id] = f64::NEG_INFINITY;
    }
    argmax(&masked)
}

fn embed_dropout(g: &mut Graph, x: Var, noise: Option<&mut Noise>) -> Result<Var> {
    let Some(n) = noise else { return Ok(x) };
    let p = n.gru_dropout;
    if p <= 0.0 {
        return Ok(x);
    }
    let keep = 1.0 / (1.0 - p);
    let shape = g.value(x).shape().to_vec();
    let mask: Vec<f64> = (0..g.value(x).len())
        .map(|_| if n.rng.random::<f64>() < p { 0.0 } else { keep })
        .collect();
    let mask = g.constant(Tensor::new(shape, mask)?);
    g.mul(x, mask)
}

/// Row `t * B + b` holds token `t` of sequence `b`, or `<pad>` past its end.
fn time_major(seqs: &[&[usize]]) -> (Vec<usize>, usize) {
    let bsz = seqs.len();
    let t_max = seqs.iter().map(|s| s.len()).max().unwrap_or(0);
    let mut ids = vec![PAD; t_max * bsz];
    for (b, s) in seqs.iter().enumerate() {
        for (t, &id) in s.iter().enumerate() {
            ids[t * bsz + b] = id;
        }
    }
    (ids, t_max)
}

fn shift_right(body: &[usize]) -> Vec<usize> {
    let mut v = Vec::with_capacity(body.len() + 1);
    v.push(BOS);
    v.extend_from_slice(body);
    v
}

fn with_eos(body: &[usize]) -> Vec<usize> {
    let mut v = body.to_vec();
    v.push(EOS);
    v
}

/// Syntax decoder inputs `<s> s_1 … s_{n−1}` and targets `s_1 … s_n`.
fn syntax_io(batch: &Batch) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
    batch
        .syntax()
        .into_iter()
        .map(|s| (shift_right(&s[..s.len() - 1]), s.to_vec()))
        .unzip()
}
