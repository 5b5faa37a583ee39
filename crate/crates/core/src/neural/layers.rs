use rand_chacha::ChaCha8Rng;

use super::store::{ParamId, ParamStore};
use super::tape::{NodeId, Tape};
use crate::{Error, Result};

/// Affine map `y = W x + b`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub w: ParamId,
    pub b: ParamId,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        out_dim: usize,
    ) -> Self {
        let w = store.add_xavier(rng, &format!("{prefix}.w"), out_dim, in_dim);
        let b = store.add_zeros(&format!("{prefix}.b"), out_dim, 1);
        Dense {
            w,
            b,
            in_dim,
            out_dim,
        }
    }

    pub fn forward(&self, tape: &mut Tape, store: &ParamStore, x: NodeId) -> NodeId {
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let wx = tape.matmul(w, x);
        tape.add(wx, b)
    }
}

/// Gated recurrent unit cell.
///
/// z = sigma(Wz x + Uz h + bz), r = sigma(Wr x + Ur h + br),
/// cand = tanh(Wh x + Uh (r . h) + bh), h' = (1-z) . h + z . cand.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub wz: ParamId,
    pub uz: ParamId,
    pub bz: ParamId,
    pub wr: ParamId,
    pub ur: ParamId,
    pub br: ParamId,
    pub wh: ParamId,
    pub uh: ParamId,
    pub bh: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        let m = |s: &mut ParamStore, r: &mut ChaCha8Rng, name: &str| {
            s.add_xavier(r, &format!("{prefix}.{name}"), hidden, in_dim)
        };
        let wz = m(store, rng, "wz");
        let wr = m(store, rng, "wr");
        let wh = m(store, rng, "wh");
        let u = |s: &mut ParamStore, r: &mut ChaCha8Rng, name: &str| {
            s.add_xavier(r, &format!("{prefix}.{name}"), hidden, hidden)
        };
        let uz = u(store, rng, "uz");
        let ur = u(store, rng, "ur");
        let uh = u(store, rng, "uh");
        let bz = store.add_zeros(&format!("{prefix}.bz"), hidden, 1);
        let br = store.add_zeros(&format!("{prefix}.br"), hidden, 1);
        let bh = store.add_zeros(&format!("{prefix}.bh"), hidden, 1);
        GruCell {
            wz,
            uz,
            bz,
            wr,
            ur,
            br,
            wh,
            uh,
            bh,
            in_dim,
            hidden,
        }
    }

    /// One step; validates that inputs are finite.
    pub fn step(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        h_prev: NodeId,
    ) -> Result<NodeId> {
        if !tape.value(x).all_finite() || !tape.value(h_prev).all_finite() {
            return Err(Error::Invalid("non-finite input to GRU step".into()));
        }
        Ok(self.step_unchecked(tape, store, x, h_prev))
    }

    pub(crate) fn step_unchecked(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        h_prev: NodeId,
    ) -> NodeId {
        let gate = |tape: &mut Tape, w, u, b, x, h| {
            let wn = tape.param(store, w);
            let un = tape.param(store, u);
            let bn = tape.param(store, b);
            let wx = tape.matmul(wn, x);
            let uh = tape.matmul(un, h);
            let s = tape.add(wx, uh);
            tape.add(s, bn)
        };
        let z_pre = gate(tape, self.wz, self.uz, self.bz, x, h_prev);
        let z = tape.sigmoid(z_pre);
        let r_pre = gate(tape, self.wr, self.ur, self.br, x, h_prev);
        let r = tape.sigmoid(r_pre);
        let rh = tape.mul(r, h_prev);
        let cand_pre = gate(tape, self.wh, self.uh, self.bh, x, rh);
        let cand = tape.tanh(cand_pre);
        // h' = (1 - z) . h_prev + z . cand
        let neg_z = tape.scale(z, -1.0);
        let one_minus_z = tape.add_scalar(neg_z, 1.0);
        let keep = tape.mul(one_minus_z, h_prev);
        let update = tape.mul(z, cand);
        tape.add(keep, update)
    }
}

/// Bidirectional GRU; outputs are `[forward ; backward]` per position.
#[derive(Clone, Debug)]
pub struct BiGru {
    pub fwd: GruCell,
    pub bwd: GruCell,
}

impl BiGru {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        BiGru {
            fwd: GruCell::new(store, rng, &format!("{prefix}.fwd"), in_dim, hidden),
            bwd: GruCell::new(store, rng, &format!("{prefix}.bwd"), in_dim, hidden),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: &[NodeId]) -> Result<Vec<NodeId>> {
        if xs.is_empty() {
            return Err(Error::Invalid("empty sequence for BiGRU".into()));
        }
        for &x in xs {
            if !tape.value(x).all_finite() {
                return Err(Error::Invalid("non-finite input to BiGRU".into()));
            }
        }
        let mut fwd = Vec::with_capacity(xs.len());
        let mut h = tape.zeros(self.fwd.hidden, 1);
        for &x in xs {
            h = self.fwd.step_unchecked(tape, store, x, h);
            fwd.push(h);
        }
        let mut bwd = vec![tape.zeros(1, 1); xs.len()];
        let mut hb = tape.zeros(self.bwd.hidden, 1);
        for (i, &x) in xs.iter().enumerate().rev() {
            hb = self.bwd.step_unchecked(tape, store, x, hb);
            bwd[i] = hb;
        }
        Ok(fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, b)| tape.concat_rows(&[f, b]))
            .collect())
    }
}

/// LSTM cell with input/forget/output gates and a tanh candidate.
#[derive(Clone, Debug)]
pub struct LstmCell {
    pub wi: ParamId,
    pub ui: ParamId,
    pub bi: ParamId,
    pub wf: ParamId,
    pub uf: ParamId,
    pub bf: ParamId,
    pub wo: ParamId,
    pub uo: ParamId,
    pub bo: ParamId,
    pub wg: ParamId,
    pub ug: ParamId,
    pub bg: ParamId,
    pub in_dim: usize,
    pub hidden: usize,
}

impl LstmCell {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        let w = |s: &mut ParamStore, r: &mut ChaCha8Rng, name: &str| {
            s.add_xavier(r, &format!("{prefix}.{name}"), hidden, in_dim)
        };
        let wi = w(store, rng, "wi");
        let wf = w(store, rng, "wf");
        let wo = w(store, rng, "wo");
        let wg = w(store, rng, "wg");
        let u = |s: &mut ParamStore, r: &mut ChaCha8Rng, name: &str| {
            s.add_xavier(r, &format!("{prefix}.{name}"), hidden, hidden)
        };
        let ui = u(store, rng, "ui");
        let uf = u(store, rng, "uf");
        let uo = u(store, rng, "uo");
        let ug = u(store, rng, "ug");
        let b = |s: &mut ParamStore, name: &str| {
            s.add_zeros(&format!("{prefix}.{name}"), hidden, 1)
        };
        let bi = b(store, "bi");
        let bf = b(store, "bf");
        let bo = b(store, "bo");
        let bg = b(store, "bg");
        LstmCell {
            wi,
            ui,
            bi,
            wf,
            uf,
            bf,
            wo,
            uo,
            bo,
            wg,
            ug,
            bg,
            in_dim,
            hidden,
        }
    }

    pub(crate) fn step_unchecked(
        &self,
        tape: &mut Tape,
        store: &ParamStore,
        x: NodeId,
        h_prev: NodeId,
        c_prev: NodeId,
    ) -> (NodeId, NodeId) {
        let gate = |tape: &mut Tape, w, u, b, x, h| {
            let wn = tape.param(store, w);
            let un = tape.param(store, u);
            let bn = tape.param(store, b);
            let wx = tape.matmul(wn, x);
            let uh = tape.matmul(un, h);
            let s = tape.add(wx, uh);
            tape.add(s, bn)
        };
        let i_pre = gate(tape, self.wi, self.ui, self.bi, x, h_prev);
        let i = tape.sigmoid(i_pre);
        let f_pre = gate(tape, self.wf, self.uf, self.bf, x, h_prev);
        let f = tape.sigmoid(f_pre);
        let o_pre = gate(tape, self.wo, self.uo, self.bo, x, h_prev);
        let o = tape.sigmoid(o_pre);
        let g_pre = gate(tape, self.wg, self.ug, self.bg, x, h_prev);
        let g = tape.tanh(g_pre);
        let fc = tape.mul(f, c_prev);
        let ig = tape.mul(i, g);
        let c = tape.add(fc, ig);
        let tc = tape.tanh(c);
        let h = tape.mul(o, tc);
        (h, c)
    }
}

/// Bidirectional LSTM; outputs are `[forward ; backward]` per position.
#[derive(Clone, Debug)]
pub struct BiLstm {
    pub fwd: LstmCell,
    pub bwd: LstmCell,
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        in_dim: usize,
        hidden: usize,
    ) -> Self {
        BiLstm {
            fwd: LstmCell::new(store, rng, &format!("{prefix}.fwd"), in_dim, hidden),
            bwd: LstmCell::new(store, rng, &format!("{prefix}.bwd"), in_dim, hidden),
        }
    }

    pub fn out_dim(&self) -> usize {
        2 * self.fwd.hidden
    }

    pub fn run(&self, tape: &mut Tape, store: &ParamStore, xs: &[NodeId]) -> Result<Vec<NodeId>> {
        if xs.is_empty() {
            return Err(Error::Invalid("empty sequence for BiLSTM".into()));
        }
        for &x in xs {
            if !tape.value(x).all_finite() {
                return Err(Error::Invalid("non-finite input to BiLSTM".into()));
            }
        }
        let mut fwd = Vec::with_capacity(xs.len());
        let mut h = tape.zeros(self.fwd.hidden, 1);
        let mut c = tape.zeros(self.fwd.hidden, 1);
        for &x in xs {
            let (nh, nc) = self.fwd.step_unchecked(tape, store, x, h, c);
            h = nh;
            c = nc;
            fwd.push(h);
        }
        let mut bwd = vec![tape.zeros(1, 1); xs.len()];
        let mut hb = tape.zeros(self.bwd.hidden, 1);
        let mut cb = tape.zeros(self.bwd.hidden, 1);
        for (i, &x) in xs.iter().enumerate().rev() {
            let (nh, nc) = self.bwd.step_unchecked(tape, store, x, hb, cb);
            hb = nh;
            cb = nc;
            bwd[i] = hb;
        }
        Ok(fwd
            .into_iter()
            .zip(bwd)
            .map(|(f, b)| tape.concat_rows(&[f, b]))
            .collect())
    }
}

/// Character convolution: embed characters from a hashed table, slide a
/// width-3 filter bank, max-pool over positions.
#[derive(Clone, Debug)]
pub struct CharCnn {
    pub table: ParamId,
    pub w: ParamId,
    pub b: ParamId,
    pub buckets: usize,
    pub char_dim: usize,
    pub filters: usize,
}

impl CharCnn {
    pub const WIDTH: usize = 3;

    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        prefix: &str,
        buckets: usize,
        char_dim: usize,
        filters: usize,
    ) -> Self {
        let table = store.add_xavier(rng, &format!("{prefix}.chars"), buckets, char_dim);
        let w = store.add_xavier(rng, &format!("{prefix}.w"), filters, Self::WIDTH * char_dim);
        let b = store.add_zeros(&format!("{prefix}.b"), filters, 1);
        CharCnn {
            table,
            w,
            b,
            buckets,
            char_dim,
            filters,
        }
    }

    fn bucket(&self, c: char) -> usize {
        (fnv1a(&(c as u32).to_le_bytes()) as usize) % self.buckets
    }

    /// Encode one token into a `filters x 1` vector.
    pub fn encode(&self, tape: &mut Tape, store: &ParamStore, token: &str) -> NodeId {
        let ids: Vec<usize> = token.chars().map(|c| self.bucket(c)).collect();
        if ids.is_empty() {
            return tape.zeros(self.filters, 1);
        }
        let pad = tape.zeros(1, self.char_dim);
        let embedded: Vec<NodeId> = ids
            .iter()
            .map(|&i| tape.param_rows(store, self.table, &[i]))
            .collect();
        let w = tape.param(store, self.w);
        let b = tape.param(store, self.b);
        let mut per_pos = Vec::with_capacity(ids.len());
        for p in 0..ids.len() {
            let left = if p == 0 { pad } else { embedded[p - 1] };
            let right = if p + 1 == ids.len() { pad } else { embedded[p + 1] };
            let window = tape.concat_rows(&[left, embedded[p], right]);
            let col = tape.reshape(window, Self::WIDTH * self.char_dim, 1);
            let conv = tape.matmul(w, col);
            let conv = tape.add(conv, b);
            let act = tape.tanh(conv);
            per_pos.push(tape.reshape(act, 1, self.filters));
        }
        let stacked = tape.concat_rows(&per_pos);
        let pooled = tape.max_cols(stacked);
        tape.reshape(pooled, self.filters, 1)
    }
}

/// FNV-1a over bytes; stable across platforms.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x100_0000_01b3);
    }
    h
}
