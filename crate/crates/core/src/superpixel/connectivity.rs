use std::collections::HashMap;

/// Splits every label into 4-connected components, keeps the largest
/// component of each label, and merges every other component (and every
/// component smaller than `min_size`) into the adjacent region sharing the
/// longest boundary. Returns dense labels in first-occurrence order.
pub(crate) fn enforce_connectivity(w: usize, h: usize, labels: &[u32], min_size: usize) -> Vec<u32> {
    let n = w * h;
    let (comp, sizes, owners) = components(w, h, labels);
    let nc = sizes.len();

    // Largest component per original label.
    let mut primary: HashMap<u32, usize> = HashMap::new();
    for c in 0..nc {
        primary
            .entry(owners[c])
            .and_modify(|best| {
                if sizes[c] > sizes[*best] {
                    *best = c;
                }
            })
            .or_insert(c);
    }

    // Shared boundary length between adjacent components.
    let mut edges: Vec<HashMap<usize, usize>> = vec![HashMap::new(); nc];
    for p in 0..n {
        let (x, y) = (p % w, p / w);
        let a = comp[p];
        for q in [(x + 1 < w).then(|| p + 1), (y + 1 < h).then(|| p + w)].into_iter().flatten() {
            let b = comp[q];
            if a != b {
                *edges[a].entry(b).or_default() += 1;
                *edges[b].entry(a).or_default() += 1;
            }
        }
    }

    let mut parent: Vec<usize> = (0..nc).collect();
    let mut size = sizes.clone();
    let find = |parent: &mut Vec<usize>, mut c: usize| {
        while parent[c] != c {
            parent[c] = parent[parent[c]];
            c = parent[c];
        }
        c
    };

    let mut order: Vec<usize> = (0..nc).collect();
    order.sort_by_key(|&c| (sizes[c], c));
    for c in order {
        if find(&mut parent, c) != c {
            continue;
        }
        let orphan = primary[&owners[c]] != c;
        if !orphan && size[c] >= min_size {
            continue;
        }
        // Aggregate boundary by current root; ties go to the smaller root id.
        let mut by_root: HashMap<usize, usize> = HashMap::new();
        for (&nb, &len) in &edges[c] {
            let r = find(&mut parent, nb);
            if r != c {
                *by_root.entry(r).or_default() += len;
            }
        }
        let Some((&target, _)) = by_root
            .iter()
            .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0)))
        else {
            continue;
        };
        parent[c] = target;
        size[target] += size[c];
        let moved = std::mem::take(&mut edges[c]);
        for (nb, len) in moved {
            if nb != target {
                *edges[target].entry(nb).or_default() += len;
            }
        }
    }

    let mut dense: HashMap<usize, u32> = HashMap::new();
    let mut out = Vec::with_capacity(n);
    for p in 0..n {
        let r = find(&mut parent, comp[p]);
        let next = dense.len() as u32;
        out.push(*dense.entry(r).or_insert(next));
    }
    out
}

/// 4-connected components: per-pixel component id, component sizes, and the
/// original label of each component.
fn components(w: usize, h: usize, labels: &[u32]) -> (Vec<usize>, Vec<usize>, Vec<u32>) {
    let n = w * h;
    let mut comp = vec![usize::MAX; n];
    let mut sizes = Vec::new();
    let mut owners = Vec::new();
    let mut stack = Vec::new();
    for start in 0..n {
        if comp[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let label = labels[start];
        comp[start] = id;
        stack.push(start);
        let mut count = 0;
        while let Some(p) = stack.pop() {
            count += 1;
            let (x, y) = (p % w, p / w);
            let neighbors = [
                (x > 0).then(|| p - 1),
                (x + 1 < w).then(|| p + 1),
                (y > 0).then(|| p - w),
                (y + 1 < h).then(|| p + w),
            ];
            for q in neighbors.into_iter().flatten() {
                if comp[q] == usize::MAX && labels[q] == label {
                    comp[q] = id;
                    stack.push(q);
                }
            }
        }
        sizes.push(count);
        owners.push(label);
    }
    (comp, sizes, owners)
}
