use ndarray::{ArrayView1, ArrayView2, ArrayViewMut1, ArrayViewMut2};

/// Handle to one named block inside a [`Layout`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockId(usize);

#[derive(Debug, Clone)]
pub struct BlockInfo {
    pub name: String,
    pub offset: usize,
    /// Row-major shape; `[rows, cols]` for matrices, `[len]` for vectors.
    pub shape: Vec<usize>,
}

impl BlockInfo {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }
}

/// Immutable map from block names to offsets into flat parameter storage.
#[derive(Debug, Clone, Default)]
pub struct Layout {
    blocks: Vec<BlockInfo>,
    total: usize,
}

impl Layout {
    pub fn new() -> Self {
        Self::default()
    }

    /// Registers a block and returns its handle. Names must be unique.
    pub fn add(&mut self, name: &str, shape: &[usize]) -> BlockId {
        assert!(
            self.blocks.iter().all(|b| b.name != name),
            "duplicate parameter block `{name}`"
        );
        let info = BlockInfo {
            name: name.to_owned(),
            offset: self.total,
            shape: shape.to_vec(),
        };
        self.total += info.len();
        self.blocks.push(info);
        BlockId(self.blocks.len() - 1)
    }

    pub fn total_len(&self) -> usize {
        self.total
    }

    pub fn blocks(&self) -> &[BlockInfo] {
        &self.blocks
    }

    pub fn info(&self, id: BlockId) -> &BlockInfo {
        &self.blocks[id.0]
    }

    pub fn id_by_name(&self, name: &str) -> Option<BlockId> {
        self.blocks.iter().position(|b| b.name == name).map(BlockId)
    }

    /// Name of the block containing flat index `idx`.
    pub fn block_name_at(&self, idx: usize) -> &str {
        let b = self
            .blocks
            .iter()
            .rev()
            .find(|b| b.offset <= idx)
            .expect("index before first block");
        assert!(idx < b.offset + b.len(), "index {idx} past end of storage");
        &b.name
    }
}

/// Flat parameter vector plus its layout.
#[derive(Debug, Clone)]
pub struct ParamStore {
    layout: Layout,
    values: Vec<f64>,
}

impl ParamStore {
    pub fn zeros(layout: Layout) -> Self {
        let values = vec![0.0; layout.total_len()];
        Self { layout, values }
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn range(&self, id: BlockId) -> (usize, usize) {
        let info = self.layout.info(id);
        (info.offset, info.offset + info.len())
    }

    pub fn slice(&self, id: BlockId) -> &[f64] {
        let (a, b) = self.range(id);
        &self.values[a..b]
    }

    pub fn slice_mut(&mut self, id: BlockId) -> &mut [f64] {
        let (a, b) = self.range(id);
        &mut self.values[a..b]
    }

    /// Matrix view of a 2-d block.
    pub fn mat(&self, id: BlockId) -> ArrayView2<'_, f64> {
        let info = self.layout.info(id);
        assert_eq!(info.shape.len(), 2, "block `{}` is not 2-d", info.name);
        let (r, c) = (info.shape[0], info.shape[1]);
        ArrayView2::from_shape((r, c), self.slice(id)).expect("shape matches block length")
    }

    pub fn mat_mut(&mut self, id: BlockId) -> ArrayViewMut2<'_, f64> {
        let info = self.layout.info(id).clone();
        assert_eq!(info.shape.len(), 2, "block `{}` is not 2-d", info.name);
        let (r, c) = (info.shape[0], info.shape[1]);
        ArrayViewMut2::from_shape((r, c), self.slice_mut(id)).expect("shape matches block length")
    }

    /// Vector view of a 1-d block.
    pub fn vec(&self, id: BlockId) -> ArrayView1<'_, f64> {
        let info = self.layout.info(id);
        assert_eq!(info.shape.len(), 1, "block `{}` is not 1-d", info.name);
        ArrayView1::from_shape(info.shape[0], self.slice(id)).expect("shape matches block length")
    }

    pub fn vec_mut(&mut self, id: BlockId) -> ArrayViewMut1<'_, f64> {
        let info = self.layout.info(id).clone();
        assert_eq!(info.shape.len(), 1, "block `{}` is not 1-d", info.name);
        ArrayViewMut1::from_shape(info.shape[0], self.slice_mut(id))
            .expect("shape matches block length")
    }

    /// A zeroed store with the same layout, for gradients or velocities.
    pub fn like(&self) -> Self {
        Self::zeros(self.layout.clone())
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layout_offsets_accumulate() {
        let mut layout = Layout::new();
        let a = layout.add("a.w", &[2, 3]);
        let b = layout.add("a.b", &[3]);
        let c = layout.add("z", &[4, 4]);
        assert_eq!(layout.total_len(), 6 + 3 + 16);
        assert_eq!(layout.info(a).offset, 0);
        assert_eq!(layout.info(b).offset, 6);
        assert_eq!(layout.info(c).offset, 9);
        assert_eq!(layout.id_by_name("a.b"), Some(b));
        assert_eq!(layout.id_by_name("missing"), None);
    }

    #[test]
    fn block_name_at_resolves_boundaries() {
        let mut layout = Layout::new();
        layout.add("first", &[2, 2]);
        layout.add("second", &[3]);
        assert_eq!(layout.block_name_at(0), "first");
        assert_eq!(layout.block_name_at(3), "first");
        assert_eq!(layout.block_name_at(4), "second");
        assert_eq!(layout.block_name_at(6), "second");
    }

    #[test]
    #[should_panic(expected = "duplicate parameter block")]
    fn duplicate_names_rejected() {
        let mut layout = Layout::new();
        layout.add("w", &[1]);
        layout.add("w", &[2]);
    }

    #[test]
    fn views_alias_flat_storage() {
        let mut layout = Layout::new();
        let w = layout.add("w", &[2, 2]);
        let b = layout.add("b", &[2]);
        let mut store = ParamStore::zeros(layout);
        store.mat_mut(w)[[1, 0]] = 5.0;
        store.vec_mut(b)[1] = -1.0;
        assert_eq!(store.values()[2], 5.0);
        assert_eq!(store.values()[5], -1.0);
        assert_eq!(store.mat(w)[[1, 0]], 5.0);
    }
}
