use rand::Rng;

use crate::corpusprep::{Vocabulary, BOS_ID, EOS_ID};
use crate::lexicon::{strip_entity, Placeholder};
use crate::numcore::{
    attention_backward, attention_forward, dropout, gru_backward, gru_forward, matvec, matvec_acc, matvec_t_acc,
    outer_acc, softmax_in_place, softmax_xent, AttentionParams, AttentionStep, DropoutMode, GruCache, GruParams,
    ParamSet, Real, Tensor,
};

use super::{ModelConfig, Seq2SeqError};

/// Every trainable tensor of the encoder-decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2SeqParams<T> {
    pub src_embed: Tensor<T>,
    pub trg_embed: Tensor<T>,
    pub enc_fwd: GruParams<T>,
    pub enc_bwd: GruParams<T>,
    /// Maps the first backward encoder state to the initial decoder state.
    pub init_w: Tensor<T>,
    pub init_b: Tensor<T>,
    pub att: AttentionParams<T>,
    /// Input is `[trg_embed(y_prev); context]`.
    pub dec: GruParams<T>,
    /// Readout over `[s_j; context_j]`.
    pub out_w: Tensor<T>,
    pub out_b: Tensor<T>,
}

impl<T: Real> Seq2SeqParams<T> {
    pub fn zeros(vocab: usize, e: usize, h: usize) -> Self {
        Seq2SeqParams {
            src_embed: Tensor::zeros(&[vocab, e]),
            trg_embed: Tensor::zeros(&[vocab, e]),
            enc_fwd: GruParams::zeros(e, h),
            enc_bwd: GruParams::zeros(e, h),
            init_w: Tensor::zeros(&[h, h]),
            init_b: Tensor::zeros(&[h]),
            att: AttentionParams::zeros(h, h, h),
            dec: GruParams::zeros(e + h, h),
            out_w: Tensor::zeros(&[vocab, 2 * h]),
            out_b: Tensor::zeros(&[vocab]),
        }
    }

    pub fn init<R: Rng>(vocab: usize, e: usize, h: usize, scale: f64, rng: &mut R) -> Self {
        Seq2SeqParams {
            src_embed: Tensor::uniform(&[vocab, e], scale, rng),
            trg_embed: Tensor::uniform(&[vocab, e], scale, rng),
            enc_fwd: GruParams::init(e, h, scale, rng),
            enc_bwd: GruParams::init(e, h, scale, rng),
            init_w: Tensor::uniform(&[h, h], scale, rng),
            init_b: Tensor::zeros(&[h]),
            att: AttentionParams::init(h, h, h, scale, rng),
            dec: GruParams::init(e + h, h, scale, rng),
            out_w: Tensor::uniform(&[vocab, 2 * h], scale, rng),
            out_b: Tensor::zeros(&[vocab]),
        }
    }

    pub fn cast<U: Real>(&self) -> Seq2SeqParams<U> {
        let mut out = Seq2SeqParams::<U>::zeros(self.src_embed.rows(), self.src_embed.cols(), self.init_b.len());
        for (dst, src) in out.tensors_mut().into_iter().zip(self.tensors()) {
            *dst = src.cast();
        }
        out
    }
}

impl<T: Real> ParamSet<T> for Seq2SeqParams<T> {
    fn tensors(&self) -> Vec<&Tensor<T>> {
        let mut v = vec![&self.src_embed, &self.trg_embed];
        v.extend(self.enc_fwd.tensors());
        v.extend(self.enc_bwd.tensors());
        v.extend([&self.init_w, &self.init_b]);
        v.extend(self.att.tensors());
        v.extend(self.dec.tensors());
        v.extend([&self.out_w, &self.out_b]);
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.src_embed, &mut self.trg_embed];
        v.extend(self.enc_fwd.tensors_mut());
        v.extend(self.enc_bwd.tensors_mut());
        v.extend([&mut self.init_w, &mut self.init_b]);
        v.extend(self.att.tensors_mut());
        v.extend(self.dec.tensors_mut());
        v.extend([&mut self.out_w, &mut self.out_b]);
        v
    }

    fn names(&self) -> Vec<String> {
        let prefixed = |p: &'static str, names: Vec<String>| names.into_iter().map(move |n| format!("{p}.{n}"));
        let mut v = vec!["src_embed".to_string(), "trg_embed".to_string()];
        v.extend(prefixed("enc_fwd", self.enc_fwd.names()));
        v.extend(prefixed("enc_bwd", self.enc_bwd.names()));
        v.extend(["init.w".to_string(), "init.b".to_string()]);
        v.extend(prefixed("att", self.att.names()));
        v.extend(prefixed("dec", self.dec.names()));
        v.extend(["out.w".to_string(), "out.b".to_string()]);
        v
    }
}

/// A source placeholder that carries its entity.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourcePlaceholder {
    pub position: usize,
    pub slot_type: String,
    pub entity: String,
}

/// Encoder states plus what generation and placeholder resolution need.
#[derive(Debug, Clone)]
pub struct EncoderOutput<T> {
    /// `m × hidden`; row `i` is the sum of forward and backward states.
    pub h: Tensor<T>,
    pub tokens: Vec<String>,
    pub ids: Vec<usize>,
    pub placeholders: Vec<SourcePlaceholder>,
    pub s0: Vec<T>,
    keys: Tensor<T>,
}

/// Output of one decoder step.
#[derive(Debug, Clone)]
pub struct DecodeStep<T> {
    pub probs: Vec<T>,
    pub attention: Vec<T>,
    pub context: Vec<T>,
    pub state: Vec<T>,
}

/// The encoder-decoder with its vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct Seq2Seq<T> {
    pub config: ModelConfig,
    pub vocab: Vocabulary,
    pub params: Seq2SeqParams<T>,
}

struct EncoderCache<T> {
    fwd: Vec<GruCache<T>>,
    bwd: Vec<GruCache<T>>,
    /// Dropout mask over `H`, flattened row-major.
    h_mask: Option<Vec<T>>,
    hd: Tensor<T>,
    keys: Tensor<T>,
    s0: Vec<T>,
}

struct StepCache<T> {
    y_prev: usize,
    s_prev: Vec<T>,
    att: AttentionStep<T>,
    gru: GruCache<T>,
    readout: Vec<T>,
    r_mask: Option<Vec<T>>,
    dlogits: Vec<T>,
}

impl<T: Real> Seq2Seq<T> {
    /// Fresh model with parameters drawn from `rng`.
    pub fn new<R: Rng>(config: ModelConfig, vocab: Vocabulary, rng: &mut R) -> Result<Self, Seq2SeqError> {
        config.validate()?;
        let params = Seq2SeqParams::init(vocab.len(), config.embed_dim, config.hidden_dim, config.init_scale, rng);
        Ok(Seq2Seq { config, vocab, params })
    }

    pub fn hidden_dim(&self) -> usize {
        self.config.hidden_dim
    }

    pub fn embed_dim(&self) -> usize {
        self.config.embed_dim
    }

    /// Maps source tokens to ids. Placeholders with an entity are looked up
    /// by their bare `$type` form and recorded for resolution.
    pub fn source_ids<S: AsRef<str>>(&self, tokens: &[S]) -> (Vec<usize>, Vec<SourcePlaceholder>) {
        let mut ids = Vec::with_capacity(tokens.len());
        let mut placeholders = Vec::new();
        for (position, tok) in tokens.iter().enumerate() {
            let tok = tok.as_ref();
            if let Some(Placeholder {
                slot_type,
                entity: Some(entity),
            }) = Placeholder::parse(tok)
            {
                placeholders.push(SourcePlaceholder {
                    position,
                    slot_type,
                    entity,
                });
            }
            ids.push(self.vocab.id(&strip_entity(tok)));
        }
        (ids, placeholders)
    }

    fn check_ids(&self, ids: &[usize]) -> Result<(), Seq2SeqError> {
        let v = self.vocab.len();
        match ids.iter().find(|&&i| i >= v) {
            Some(&index) => Err(Seq2SeqError::Num(crate::numcore::NumError::IndexOutOfRange { index, len: v })),
            None => Ok(()),
        }
    }

    fn encode_cached<R: Rng>(&self, ids: &[usize], drop: Option<(&mut R, f64)>) -> EncoderCache<T> {
        let p = &self.params;
        let (m, hd) = (ids.len(), self.hidden_dim());
        let zero = vec![T::zero(); hd];
        let mut fwd: Vec<GruCache<T>> = Vec::with_capacity(m);
        for (i, &id) in ids.iter().enumerate() {
            let prev = if i == 0 { &zero } else { &fwd[i - 1].h };
            let c = gru_forward(&p.enc_fwd, p.src_embed.row(id), prev);
            fwd.push(c);
        }
        let mut bwd: Vec<Option<GruCache<T>>> = vec![None; m];
        for i in (0..m).rev() {
            let prev = if i + 1 == m { &zero } else { &bwd[i + 1].as_ref().unwrap().h };
            let c = gru_forward(&p.enc_bwd, p.src_embed.row(ids[i]), prev);
            bwd[i] = Some(c);
        }
        let bwd: Vec<GruCache<T>> = bwd.into_iter().map(Option::unwrap).collect();

        let mut h = Tensor::zeros(&[m, hd]);
        for i in 0..m {
            for (k, v) in h.row_mut(i).iter_mut().enumerate() {
                *v = fwd[i].h[k] + bwd[i].h[k];
            }
        }
        let h_mask = match drop {
            Some((rng, rate)) => dropout(h.data_mut(), rate, DropoutMode::Train, rng),
            None => None,
        };
        let keys = p.att.keys(&h);
        let mut s0 = p.init_b.data().to_vec();
        matvec_acc(&p.init_w, &bwd[0].h, &mut s0);
        s0.iter_mut().for_each(|v| *v = v.tanh());
        EncoderCache {
            fwd,
            bwd,
            h_mask,
            hd: h,
            keys,
            s0,
        }
    }

    /// Runs both encoder directions over already-mapped ids.
    pub fn encode_ids(&self, ids: &[usize]) -> Result<EncoderOutput<T>, Seq2SeqError> {
        if ids.is_empty() {
            return Err(Seq2SeqError::EmptySource);
        }
        self.check_ids(ids)?;
        let c = self.encode_cached::<rand_chacha::ChaCha8Rng>(ids, None);
        Ok(EncoderOutput {
            h: c.hd,
            tokens: ids.iter().map(|&i| self.vocab.token(i).to_string()).collect(),
            ids: ids.to_vec(),
            placeholders: Vec::new(),
            s0: c.s0,
            keys: c.keys,
        })
    }

    /// Encodes source tokens; out-of-vocabulary tokens map to `<unk>`.
    pub fn encode<S: AsRef<str>>(&self, tokens: &[S]) -> Result<EncoderOutput<T>, Seq2SeqError> {
        let (ids, placeholders) = self.source_ids(tokens);
        let mut out = self.encode_ids(&ids)?;
        out.tokens = tokens.iter().map(|t| t.as_ref().to_string()).collect();
        out.placeholders = placeholders;
        Ok(out)
    }

    /// Attention over `enc`, one decoder GRU step and the output distribution.
    pub fn decode_step(&self, enc: &EncoderOutput<T>, s_prev: &[T], y_prev: usize) -> Result<DecodeStep<T>, Seq2SeqError> {
        crate::numcore::expect_len("decoder state", s_prev.len(), self.hidden_dim())?;
        self.check_ids(&[y_prev])?;
        let p = &self.params;
        let att = attention_forward(&p.att, s_prev, &enc.keys);
        let context = crate::numcore::context(&att.a, &enc.h)?;
        let mut x = p.trg_embed.row(y_prev).to_vec();
        x.extend_from_slice(&context);
        let state = gru_forward(&p.dec, &x, s_prev).h;
        let mut readout = state.clone();
        readout.extend_from_slice(&context);
        let mut probs = p.out_b.data().to_vec();
        matvec_acc(&p.out_w, &readout, &mut probs);
        softmax_in_place(&mut probs);
        Ok(DecodeStep {
            probs,
            attention: att.a,
            context,
            state,
        })
    }

    /// Summed cross-entropy of `trg` followed by `</s>`, accumulating the
    /// gradient into `grads`. Dropout is applied to the encoder states and
    /// the readout layer when `drop` is given; embeddings are never dropped.
    pub fn loss_and_grad<R: Rng>(
        &self,
        src: &[usize],
        trg: &[usize],
        mut drop: Option<(&mut R, f64)>,
        grads: &mut Seq2SeqParams<T>,
    ) -> Result<T, Seq2SeqError> {
        if src.is_empty() {
            return Err(Seq2SeqError::EmptySource);
        }
        self.check_ids(src)?;
        self.check_ids(trg)?;
        let p = &self.params;
        let (e, hd) = (self.embed_dim(), self.hidden_dim());
        let enc = self.encode_cached(src, drop.as_mut().map(|(r, q)| (&mut **r, *q)));
        let m = src.len();

        let mut steps: Vec<StepCache<T>> = Vec::with_capacity(trg.len() + 1);
        let mut loss = T::zero();
        let mut s_prev = enc.s0.clone();
        let mut y_prev = BOS_ID;
        for j in 0..=trg.len() {
            let gold = if j < trg.len() { trg[j] } else { EOS_ID };
            let att = attention_forward(&p.att, &s_prev, &enc.keys);
            let ctx = crate::numcore::context(&att.a, &enc.hd)?;
            let mut x = p.trg_embed.row(y_prev).to_vec();
            x.extend_from_slice(&ctx);
            let gru = gru_forward(&p.dec, &x, &s_prev);
            let mut readout = gru.h.clone();
            readout.extend_from_slice(&ctx);
            let r_mask = match drop.as_mut() {
                Some((rng, rate)) => dropout(&mut readout, *rate, DropoutMode::Train, &mut **rng),
                None => None,
            };
            let mut logits = p.out_b.data().to_vec();
            matvec_acc(&p.out_w, &readout, &mut logits);
            let (l, dlogits) = softmax_xent(&logits, gold)?;
            loss += l;
            let s_next = gru.h.clone();
            steps.push(StepCache {
                y_prev,
                s_prev: std::mem::replace(&mut s_prev, s_next),
                att,
                gru,
                readout,
                r_mask,
                dlogits,
            });
            y_prev = gold;
        }

        // Backward through the decoder.
        let mut dhd = Tensor::<T>::zeros(&[m, hd]);
        let mut dkeys = Tensor::<T>::zeros(&[m, p.att.att_dim()]);
        let mut ds = vec![T::zero(); hd];
        let mut dx = vec![T::zero(); e + hd];
        let mut dread = vec![T::zero(); 2 * hd];
        let mut da = vec![T::zero(); m];
        for st in steps.iter().rev() {
            outer_acc(&mut grads.out_w, &st.dlogits, &st.readout);
            for (g, &d) in grads.out_b.data_mut().iter_mut().zip(&st.dlogits) {
                *g += d;
            }
            dread.iter_mut().for_each(|v| *v = T::zero());
            matvec_t_acc(&p.out_w, &st.dlogits, &mut dread);
            if let Some(mask) = &st.r_mask {
                for (d, &k) in dread.iter_mut().zip(mask) {
                    *d *= k;
                }
            }
            for k in 0..hd {
                ds[k] += dread[k];
            }
            let mut dctx = dread[hd..].to_vec();

            let mut ds_prev = vec![T::zero(); hd];
            dx.iter_mut().for_each(|v| *v = T::zero());
            gru_backward(&p.dec, &st.gru, &ds, &mut grads.dec, &mut dx, &mut ds_prev);
            for (g, &d) in grads.trg_embed.row_mut(st.y_prev).iter_mut().zip(&dx[..e]) {
                *g += d;
            }
            for (c, &d) in dctx.iter_mut().zip(&dx[e..]) {
                *c += d;
            }

            for i in 0..m {
                da[i] = crate::numcore::dot(&dctx, enc.hd.row(i));
                crate::numcore::axpy(st.att.a[i], &dctx, dhd.row_mut(i));
            }
            attention_backward(&p.att, &st.att, &st.s_prev, &da, &mut grads.att, &mut ds_prev, &mut dkeys);
            ds = ds_prev;
        }

        // Keys and the initial state.
        for i in 0..m {
            outer_acc(&mut grads.att.w_h, dkeys.row(i), enc.hd.row(i));
            matvec_t_acc(&p.att.w_h, dkeys.row(i), dhd.row_mut(i));
        }
        let dpre: Vec<T> = ds.iter().zip(&enc.s0).map(|(&d, &s)| d * (T::one() - s * s)).collect();
        outer_acc(&mut grads.init_w, &dpre, &enc.bwd[0].h);
        for (g, &d) in grads.init_b.data_mut().iter_mut().zip(&dpre) {
            *g += d;
        }
        let mut dhb0 = vec![T::zero(); hd];
        matvec_t_acc(&p.init_w, &dpre, &mut dhb0);

        if let Some(mask) = &enc.h_mask {
            for (d, &k) in dhd.data_mut().iter_mut().zip(mask) {
                *d *= k;
            }
        }

        // Forward encoder, right to left.
        let mut dh = vec![T::zero(); hd];
        let mut dxe = vec![T::zero(); e];
        for i in (0..m).rev() {
            for (a, &b) in dh.iter_mut().zip(dhd.row(i)) {
                *a += b;
            }
            let mut dprev = vec![T::zero(); hd];
            dxe.iter_mut().for_each(|v| *v = T::zero());
            gru_backward(&p.enc_fwd, &enc.fwd[i], &dh, &mut grads.enc_fwd, &mut dxe, &mut dprev);
            for (g, &d) in grads.src_embed.row_mut(src[i]).iter_mut().zip(&dxe) {
                *g += d;
            }
            dh = dprev;
        }
        // Backward encoder, left to right.
        let mut dh = dhb0;
        for i in 0..m {
            for (a, &b) in dh.iter_mut().zip(dhd.row(i)) {
                *a += b;
            }
            let mut dprev = vec![T::zero(); hd];
            dxe.iter_mut().for_each(|v| *v = T::zero());
            gru_backward(&p.enc_bwd, &enc.bwd[i], &dh, &mut grads.enc_bwd, &mut dxe, &mut dprev);
            for (g, &d) in grads.src_embed.row_mut(src[i]).iter_mut().zip(&dxe) {
                *g += d;
            }
            dh = dprev;
        }
        Ok(loss)
    }

    /// Summed cross-entropy without dropout or gradients.
    pub fn loss(&self, src: &[usize], trg: &[usize]) -> Result<T, Seq2SeqError> {
        let enc = self.encode_ids(src)?;
        self.check_ids(trg)?;
        let mut s = enc.s0.clone();
        let mut y_prev = BOS_ID;
        let mut total = T::zero();
        for j in 0..=trg.len() {
            let gold = if j < trg.len() { trg[j] } else { EOS_ID };
            let step = self.decode_step(&enc, &s, y_prev)?;
            total -= step.probs[gold].ln();
            s = step.state;
            y_prev = gold;
        }
        Ok(total)
    }

    /// Converts the parameters to another precision.
    pub fn cast<U: Real>(&self) -> Seq2Seq<U> {
        Seq2Seq {
            config: self.config.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
        }
    }

    /// Output projection restricted to `[s; c]`, exposed for tests.
    #[doc(hidden)]
    pub fn logits(&self, state: &[T], context: &[T]) -> Vec<T> {
        let mut readout = state.to_vec();
        readout.extend_from_slice(context);
        let mut logits = vec![T::zero(); self.vocab.len()];
        matvec(&self.params.out_w, &readout, &mut logits);
        for (l, &b) in logits.iter_mut().zip(self.params.out_b.data()) {
            *l += b;
        }
        logits
    }
}
