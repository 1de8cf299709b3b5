//! Parameterised building blocks over the tape: linear maps and GRU cells.

use numcore::{Array, Graph, ParamStore, Rng, Var};

use numcore::Result;

fn init_uniform(store: &mut ParamStore, name: &str, shape: &[usize], fan_in: usize, rng: &mut Rng) -> Result<()> {
    let limit = 1.0 / (fan_in.max(1) as f64).sqrt();
    store.insert(name, Array::uniform(shape, limit, rng))?;
    Ok(())
}

fn init_zeros(store: &mut ParamStore, name: &str, shape: &[usize]) -> Result<()> {
    store.insert(name, Array::zeros(shape))?;
    Ok(())
}

/// Embedding table `[rows, dim]`.
#[derive(Clone, Debug)]
pub struct Embedding {
    pub name: String,
    pub rows: usize,
    pub dim: usize,
}

impl Embedding {
    pub fn new(name: impl Into<String>, rows: usize, dim: usize) -> Self {
        Embedding {
            name: name.into(),
            rows,
            dim,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        store.insert(&self.name, Array::randn(&[self.rows, self.dim], 0.3, rng))?;
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph) -> Result<Var> {
        g.param(&self.name)
    }
}

/// `y = W x + b`, `W: [out, in]`.
#[derive(Clone, Debug)]
pub struct Linear {
    w: String,
    b: String,
    pub input: usize,
    pub output: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LinearVars {
    w: Var,
    b: Var,
}

impl Linear {
    pub fn new(prefix: &str, input: usize, output: usize) -> Self {
        Linear {
            w: format!("{prefix}.w"),
            b: format!("{prefix}.b"),
            input,
            output,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        init_uniform(store, &self.w, &[self.output, self.input], self.input, rng)?;
        init_zeros(store, &self.b, &[self.output])
    }

    /// Zero weights and bias: every output starts at 0.
    pub fn init_zero(&self, store: &mut ParamStore) -> Result<()> {
        init_zeros(store, &self.w, &[self.output, self.input])?;
        init_zeros(store, &self.b, &[self.output])
    }

    pub fn bind(&self, g: &mut Graph) -> Result<LinearVars> {
        Ok(LinearVars {
            w: g.param(&self.w)?,
            b: g.param(&self.b)?,
        })
    }

    pub fn names(&self) -> [&str; 2] {
        [&self.w, &self.b]
    }
}

impl LinearVars {
    pub fn apply(&self, g: &mut Graph, x: Var) -> Result<Var> {
        let wx = g.matmul(self.w, x)?;
        g.add(wx, self.b)
    }
}

/// Gated recurrent unit:
/// `z = σ(Wz x + Uz h + bz)`, `r = σ(Wr x + Ur h + br)`,
/// `n = tanh(Wn x + r ⊙ (Un h) + bn)`, `h' = (1 − z) ⊙ n + z ⊙ h`.
#[derive(Clone, Debug)]
pub struct Gru {
    names: [String; 9],
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    v: [Var; 9],
}

impl Gru {
    pub fn new(prefix: &str, input: usize, hidden: usize) -> Self {
        let n = |s: &str| format!("{prefix}.{s}");
        Gru {
            names: [
                n("wz"),
                n("uz"),
                n("bz"),
                n("wr"),
                n("ur"),
                n("br"),
                n("wn"),
                n("un"),
                n("bn"),
            ],
            input,
            hidden,
        }
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut Rng) -> Result<()> {
        let (i, h) = (self.input, self.hidden);
        for gate in 0..3 {
            init_uniform(store, &self.names[3 * gate], &[h, i], h, rng)?;
            init_uniform(store, &self.names[3 * gate + 1], &[h, h], h, rng)?;
            init_zeros(store, &self.names[3 * gate + 2], &[h])?;
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph) -> Result<GruVars> {
        let v: Vec<Var> = self.names.iter().map(|n| g.param(n)).collect::<Result<_, _>>()?;
        Ok(GruVars {
            v: v.try_into().expect("nine gate parameters"),
        })
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.names.iter().map(String::as_str)
    }
}

impl GruVars {
    pub fn step(&self, g: &mut Graph, x: Var, h: Var) -> Result<Var> {
        let [wz, uz, bz, wr, ur, br, wn, un, bn] = self.v;
        let gate = |g: &mut Graph, w: Var, u: Var, b: Var| -> Result<Var> {
            let a = g.matmul(w, x)?;
            let c = g.matmul(u, h)?;
            g.add_n(&[a, c, b])
        };
        let z = gate(g, wz, uz, bz)?;
        let z = g.sigmoid(z)?;
        let r = gate(g, wr, ur, br)?;
        let r = g.sigmoid(r)?;
        let wx = g.matmul(wn, x)?;
        let uh = g.matmul(un, h)?;
        let ruh = g.mul(r, uh)?;
        let n = g.add_n(&[wx, ruh, bn])?;
        let n = g.tanh(n)?;
        let keep = g.mul(z, h)?;
        let omz = g.one_minus(z)?;
        let new = g.mul(omz, n)?;
        g.add(new, keep)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use numcore::finite_diff_check;

    #[test]
    fn gru_step_gradients_match_finite_differences() {
        let mut rng = Rng::seed_from_u64(3);
        let mut store = ParamStore::new(3);
        let gru = Gru::new("g", 4, 4);
        gru.init(&mut store, &mut rng).unwrap();
        let head = Linear::new("o", 4, 3);
        head.init(&mut store, &mut rng).unwrap();
        let check = finite_diff_check(&store, 1e-5, |g| {
            let v = gru.bind(g)?;
            let o = head.bind(g)?;
            let x = g.input(vec![0.3, -0.2, 0.5, 0.1])?;
            let h0 = g.input(vec![0.1, 0.0, -0.4, 0.2])?;
            let h1 = v.step(g, x, h0)?;
            let h2 = v.step(g, x, h1)?;
            let logits = o.apply(g, h2)?;
            let lp = g.log_softmax(logits)?;
            g.pick(lp, 1)
        })
        .unwrap();
        assert!(check.max_rel_error < 1e-4, "{}", check.max_rel_error);
    }

    #[test]
    fn zero_linear_gives_zero_output() {
        let mut store = ParamStore::new(0);
        let l = Linear::new("z", 3, 2);
        l.init_zero(&mut store).unwrap();
        let mut g = Graph::new(&store);
        let v = l.bind(&mut g).unwrap();
        let x = g.input(vec![1.0, 2.0, 3.0]).unwrap();
        let y = v.apply(&mut g, x).unwrap();
        assert_eq!(g.value(y), &[0.0, 0.0]);
    }
}
