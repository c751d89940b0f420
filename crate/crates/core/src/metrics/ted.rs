//! Zhang–Shasha tree edit distance with unit costs.

use crate::text::ParseTree;

/// Nodes in postorder with the postorder index of each node's leftmost leaf.
struct Postorder<'a> {
    labels: Vec<&'a str>,
    leftmost: Vec<usize>,
}

impl<'a> Postorder<'a> {
    fn new(tree: &'a ParseTree) -> Self {
        let mut p = Postorder {
            labels: Vec::with_capacity(tree.num_nodes()),
            leftmost: Vec::with_capacity(tree.num_nodes()),
        };
        p.visit(tree);
        p
    }

    fn visit(&mut self, t: &'a ParseTree) -> usize {
        let mut first = None;
        for c in t.children() {
            let l = self.visit(c);
            first.get_or_insert(l);
        }
        let idx = self.labels.len();
        self.labels.push(t.label());
        self.leftmost.push(first.unwrap_or(idx));
        self.leftmost[idx]
    }

    /// The highest node for each distinct leftmost leaf, in postorder.
    fn keyroots(&self) -> Vec<usize> {
        let n = self.labels.len();
        let mut seen = vec![false; n];
        let mut roots = Vec::new();
        for i in (0..n).rev() {
            let l = self.leftmost[i];
            if !seen[l] {
                seen[l] = true;
                roots.push(i);
            }
        }
        roots.reverse();
        roots
    }
}

/// Minimum number of node insertions, deletions and relabelings turning
/// `a` into `b`.
pub fn tree_edit_distance(a: &ParseTree, b: &ParseTree) -> usize {
    let ta = Postorder::new(a);
    let tb = Postorder::new(b);
    let (n, m) = (ta.labels.len(), tb.labels.len());
    let mut td = vec![vec![0usize; m]; n];
    let mut fd = vec![vec![0usize; m + 1]; n + 1];
    for &i in &ta.keyroots() {
        for &j in &tb.keyroots() {
            let (li, lj) = (ta.leftmost[i], tb.leftmost[j]);
            // fd[x][y]: forest distance between a[li..li+x) and b[lj..lj+y).
            fd[0][0] = 0;
            for x in 1..=i - li + 1 {
                fd[x][0] = fd[x - 1][0] + 1;
            }
            for y in 1..=j - lj + 1 {
                fd[0][y] = fd[0][y - 1] + 1;
            }
            for x in 1..=i - li + 1 {
                let ai = li + x - 1;
                for y in 1..=j - lj + 1 {
                    let bj = lj + y - 1;
                    let del = fd[x - 1][y] + 1;
                    let ins = fd[x][y - 1] + 1;
                    if ta.leftmost[ai] == li && tb.leftmost[bj] == lj {
                        let rename = fd[x - 1][y - 1] + usize::from(ta.labels[ai] != tb.labels[bj]);
                        fd[x][y] = del.min(ins).min(rename);
                        td[ai][bj] = fd[x][y];
                    } else {
                        let px = ta.leftmost[ai] - li;
                        let py = tb.leftmost[bj] - lj;
                        fd[x][y] = del.min(ins).min(fd[px][py] + td[ai][bj]);
                    }
                }
            }
        }
    }
    td[n - 1][m - 1]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::text::parse_bracketed;

    fn t(s: &str) -> ParseTree {
        parse_bracketed(s).unwrap()
    }

    #[test]
    fn identical_trees() {
        let a = t("(S (NP DT NN) (VP VBZ))");
        assert_eq!(tree_edit_distance(&a, &a), 0);
    }

    #[test]
    fn single_rename() {
        assert_eq!(tree_edit_distance(&t("A"), &t("B")), 1);
    }

    #[test]
    fn classic_example() {
        // f(d(a c(b)) e) vs f(c(d(a b)) e): distance 2.
        let a = t("(f (d a (c b)) e)");
        let b = t("(f (c (d a b)) e)");
        assert_eq!(tree_edit_distance(&a, &b), 2);
        assert_eq!(tree_edit_distance(&b, &a), 2);
    }

    #[test]
    fn insert_whole_subtree() {
        let a = t("(S NP)");
        let b = t("(S NP (VP VBZ (NP DT NN)))");
        assert_eq!(tree_edit_distance(&a, &b), 5);
    }
}
