//! Recursive network over dependency trees.
//!
//! Each node composes its word embedding with its children's hidden vectors
//! through a shared transform, one matrix per dependency relation and a
//! shared bias, squashed by tanh. Errors flow back top-down through the
//! same structure, so a prediction error at any node reshapes the
//! representations of all its descendants.

use crate::corpus::{sample_open, EmbeddingMatrix, Sentence};
use crate::error::Error;
use crate::Result;
use ndarray::{Array1, Array2, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashMap};

/// Reserved relation for labels never seen at table-build time.
pub const UNK_RELATION: &str = "<unk_rel>";

/// Dependency relation name/id bijection; the unknown relation owns id 0
/// and absorbs any label missing from the table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelationTable {
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl RelationTable {
    /// Table over the relation labels of non-root tokens in `sentences`,
    /// sorted so the result does not depend on sentence order. The relation
    /// column of a head-0 token labels no edge and is ignored.
    pub fn from_sentences<'a, I: IntoIterator<Item = &'a Sentence>>(sentences: I) -> Self {
        let mut seen: Vec<String> = sentences
            .into_iter()
            .flat_map(|s| {
                s.tokens
                    .iter()
                    .filter(|t| t.head != 0)
                    .map(|t| t.relation.clone())
            })
            .filter(|r| r != UNK_RELATION)
            .collect();
        seen.sort_unstable();
        seen.dedup();
        let mut names = Vec::with_capacity(seen.len() + 1);
        names.push(UNK_RELATION.to_string());
        names.extend(seen);
        Self::from_names(names).expect("constructed without duplicates")
    }

    /// Rebuild from an ordered name table (checkpoint load path).
    pub fn from_names(names: Vec<String>) -> Result<Self> {
        let mut index = HashMap::with_capacity(names.len());
        for (i, name) in names.iter().enumerate() {
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::data(format!("duplicate relation entry {name:?}")));
            }
        }
        if !index.contains_key(UNK_RELATION) {
            return Err(Error::data("relation table lacks the unknown entry"));
        }
        Ok(RelationTable { names, index })
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    /// Id for a relation label, falling back to the unknown relation.
    pub fn id(&self, relation: &str) -> usize {
        self.index
            .get(relation)
            .copied()
            .unwrap_or_else(|| self.index[UNK_RELATION])
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }
}

/// Rooted dependency tree over token indices (0-based internally).
#[derive(Debug, Clone)]
pub struct DepTree {
    /// Token count.
    pub n: usize,
    /// Root node index.
    pub root: usize,
    /// Per node, `(child index, relation id)` in ascending child order.
    pub children: Vec<Vec<(usize, usize)>>,
    /// Per node, `(parent index, relation id)`; `None` for the root.
    pub parent: Vec<Option<(usize, usize)>>,
    /// Post-order traversal (children before parents), fixed by token index.
    post_order: Vec<usize>,
}

impl DepTree {
    /// Nodes in post-order; every child precedes its parent.
    pub fn post_order(&self) -> &[usize] {
        &self.post_order
    }
}

/// Build the tree for a root-repaired sentence.
///
/// Relations missing from `relations` map to the unknown relation. A
/// sentence whose head pointers still contain a cycle (possible when a
/// valid root coexists with a detached cycle) is rejected.
pub fn build_tree(sentence: &Sentence, relations: &RelationTable) -> Result<DepTree> {
    let n = sentence.len();
    assert!(n >= 1, "cannot build a tree over an empty sentence");
    let mut root = None;
    let mut children: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n];

    for (i, token) in sentence.tokens.iter().enumerate() {
        if token.head == 0 {
            if root.replace(i).is_some() {
                return Err(Error::data(format!(
                    "sentence {}: multiple roots survived repair",
                    sentence.id
                )));
            }
        } else {
            let head = token.head - 1;
            let rel = relations.id(&token.relation);
            children[head].push((i, rel));
            parent[i] = Some((head, rel));
        }
    }
    let root = root.ok_or_else(|| {
        Error::data(format!("sentence {}: no root survived repair", sentence.id))
    })?;

    // Post-order walk; anything unreachable from the root is a cycle.
    let mut post_order = Vec::with_capacity(n);
    let mut stack = vec![(root, 0usize)];
    while let Some((node, next_child)) = stack.pop() {
        if next_child < children[node].len() {
            stack.push((node, next_child + 1));
            stack.push((children[node][next_child].0, 0));
        } else {
            post_order.push(node);
        }
    }
    if post_order.len() != n {
        return Err(Error::data(format!(
            "cycle detected in sentence {}",
            sentence.id
        )));
    }

    Ok(DepTree {
        n,
        root,
        children,
        parent,
        post_order,
    })
}

/// Learned composition parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DtrnnParams {
    /// Common word-to-hidden transform, `d × d`.
    pub transform: Array2<f64>,
    /// One `d × d` matrix per relation id.
    pub relation: Vec<Array2<f64>>,
    /// Shared bias vector of length `d`.
    pub bias: Array1<f64>,
    /// Shared, trainable word embeddings.
    pub embeddings: EmbeddingMatrix,
}

impl DtrnnParams {
    /// Hidden/embedding dimension.
    pub fn dim(&self) -> usize {
        self.transform.nrows()
    }
}

/// Random uniform initialization in `±sqrt(6)/sqrt(2d+1)` for the transform
/// and every relation matrix; zero bias. Embeddings are attached as given.
pub fn init_params(
    d: usize,
    relations: &RelationTable,
    seed: u64,
    embeddings: EmbeddingMatrix,
) -> Result<DtrnnParams> {
    if d == 0 {
        return Err(Error::dim("hidden dimension must be positive"));
    }
    if embeddings.dim() != d {
        return Err(Error::dim(format!(
            "embeddings have dimension {}, expected {d}",
            embeddings.dim()
        )));
    }
    let bound = crate::corpus::init_bound(d);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |rows: usize, cols: usize| {
        Array2::from_shape_fn((rows, cols), |_| sample_open(&mut rng, bound))
    };
    let transform = draw(d, d);
    let relation = (0..relations.len()).map(|_| draw(d, d)).collect();
    Ok(DtrnnParams {
        transform,
        relation,
        bias: Array1::zeros(d),
        embeddings,
    })
}

/// Hidden vectors for one sentence plus the word indices they were built
/// from, kept so the backward pass can address embedding columns.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenStates {
    /// `d × n`; column `p` is the hidden vector of token `p`.
    pub hidden: Array2<f64>,
    /// Vocabulary index of each token.
    pub words: Vec<usize>,
}

impl HiddenStates {
    pub fn len(&self) -> usize {
        self.hidden.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.hidden.ncols() == 0
    }

    pub fn dim(&self) -> usize {
        self.hidden.nrows()
    }
}

/// Bottom-up composition: children first, then
/// `h = tanh(W_v x + b + Σ_children W_rel h_child)`.
pub fn forward(tree: &DepTree, params: &DtrnnParams, word_indices: &[usize]) -> HiddenStates {
    assert_eq!(word_indices.len(), tree.n, "one word index per node");
    let d = params.dim();
    let mut hidden = Array2::<f64>::zeros((d, tree.n));
    for &node in tree.post_order() {
        let x = params.embeddings.column(word_indices[node]);
        let mut pre = params.transform.dot(&x) + &params.bias;
        // Accumulate in ascending child order so the float sum does not
        // depend on how the child list happens to be stored.
        let mut children = tree.children[node].clone();
        children.sort_unstable_by_key(|&(child, _)| child);
        for (child, rel) in children {
            pre += &params.relation[rel].dot(&hidden.column(child));
        }
        hidden.column_mut(node).assign(&pre.mapv(f64::tanh));
    }
    HiddenStates {
        hidden,
        words: word_indices.to_vec(),
    }
}

/// Gradients mirroring [`DtrnnParams`], with embedding gradients kept
/// sparse per occurring word.
#[derive(Debug, Clone)]
pub struct DtrnnGradients {
    pub transform: Array2<f64>,
    pub relation: Vec<Array2<f64>>,
    pub bias: Array1<f64>,
    /// Word index → accumulated gradient on that embedding column.
    pub embedding_columns: BTreeMap<usize, Array1<f64>>,
}

impl DtrnnGradients {
    /// All-zero gradients shaped like `params`.
    pub fn zeros_like(params: &DtrnnParams) -> Self {
        let d = params.dim();
        DtrnnGradients {
            transform: Array2::zeros((d, d)),
            relation: params
                .relation
                .iter()
                .map(|m| Array2::zeros(m.dim()))
                .collect(),
            bias: Array1::zeros(d),
            embedding_columns: BTreeMap::new(),
        }
    }
}

/// Backpropagation through structure.
///
/// `upstream` holds the external error on each hidden vector (`d × n`). The
/// root sees only its external error; every other node additionally
/// receives its parent's error pushed through the relation matrix and the
/// parent's tanh derivative. Parameter gradients aggregate over all nodes.
pub fn backward(
    tree: &DepTree,
    params: &DtrnnParams,
    states: &HiddenStates,
    upstream: &ArrayView2<f64>,
) -> DtrnnGradients {
    assert_eq!(upstream.dim(), states.hidden.dim(), "error/state shape");
    let d = params.dim();
    let mut grads = DtrnnGradients::zeros_like(params);

    // Total error on each hidden vector, accumulated top-down.
    let mut total = upstream.to_owned();
    for &node in tree.post_order().iter().rev() {
        // d(tanh)/d(pre) from the stored activations.
        let h = states.hidden.column(node);
        let gate: Array1<f64> = total
            .column(node)
            .iter()
            .zip(h.iter())
            .map(|(&e, &hv)| e * (1.0 - hv * hv))
            .collect();

        let x = params.embeddings.column(states.words[node]);
        for i in 0..d {
            if gate[i] == 0.0 {
                continue;
            }
            for j in 0..d {
                grads.transform[(i, j)] += gate[i] * x[j];
            }
        }
        grads.bias += &gate;
        grads
            .embedding_columns
            .entry(states.words[node])
            .or_insert_with(|| Array1::zeros(d))
            .scaled_add(1.0, &params.transform.t().dot(&gate));

        for &(child, rel) in &tree.children[node] {
            let h_child = states.hidden.column(child);
            for i in 0..d {
                if gate[i] == 0.0 {
                    continue;
                }
                for j in 0..d {
                    grads.relation[rel][(i, j)] += gate[i] * h_child[j];
                }
            }
            let pushed = params.relation[rel].t().dot(&gate);
            total.column_mut(child).scaled_add(1.0, &pushed);
        }
    }
    grads
}

/// Per-token softmax classifier on top of the hidden vectors, used to
/// pretrain the composition parameters with cross-entropy error.
#[derive(Debug, Clone)]
pub struct SoftmaxResult {
    /// Mean cross-entropy over the sentence's tokens.
    pub loss: f64,
    /// Error signal on the hidden vectors (`d × n`), ready for [`backward`].
    pub upstream: Array2<f64>,
    /// Gradient on the classifier weights (`|L| × d`).
    pub head: Array2<f64>,
}

/// Cross-entropy loss and gradients of the softmax head.
pub fn softmax_head(
    states: &HiddenStates,
    head_weights: &ArrayView2<f64>,
    gold: &[usize],
) -> SoftmaxResult {
    let n = states.len();
    let labels = head_weights.nrows();
    assert_eq!(gold.len(), n, "one gold label per token");
    assert_eq!(head_weights.ncols(), states.dim(), "head/state dims");
    assert!(gold.iter().all(|&y| y < labels), "gold label out of range");

    let logits = head_weights.dot(&states.hidden); // |L| × n
    let mut loss = 0.0;
    let mut upstream = Array2::<f64>::zeros((states.dim(), n));
    let mut head_grad = Array2::<f64>::zeros((labels, states.dim()));
    let scale = 1.0 / n as f64;

    for p in 0..n {
        let col = logits.column(p);
        let max = col.fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_norm = max + col.iter().map(|&x| (x - max).exp()).sum::<f64>().ln();
        loss += (log_norm - col[gold[p]]) * scale;

        // probs - onehot, scaled by 1/n.
        let mut err: Array1<f64> = col.mapv(|x| (x - log_norm).exp() * scale);
        err[gold[p]] -= scale;

        upstream
            .column_mut(p)
            .assign(&head_weights.t().dot(&err));
        let h = states.hidden.column(p);
        for y in 0..labels {
            if err[y] == 0.0 {
                continue;
            }
            for j in 0..states.dim() {
                head_grad[(y, j)] += err[y] * h[j];
            }
        }
    }
    SoftmaxResult {
        loss,
        upstream,
        head: head_grad,
    }
}
