//! DOM pruning for prompt budgets. The output is a subtree-preserving
//! selection of the page tree whose nodes keep their original node paths, so
//! selectors resolved against the pruned tree stay valid on the full page.

use crate::model::Widget;

/// Prune a page tree to at most `budget` nodes.
///
/// Invisible subtrees are dropped entirely. Decorative nodes (no text, no
/// content description, no interaction flag, no retained child) are dropped
/// bottom-up. If the result still exceeds the budget, the deepest leaves are
/// dropped one at a time, non-interactive ones first.
pub fn prune_dom(root: &Widget, budget: usize) -> Option<Widget> {
    assert!(budget >= 1, "budget must be at least 1");
    let kept = drop_invisible(root)?;
    let mut kept = drop_decorative(kept)?;
    while kept.node_count() > budget {
        let victim = pick_drop_victim(&kept)?;
        if victim.is_empty() {
            // Only the root remains and it is still over budget.
            return None;
        }
        remove_at(&mut kept, &victim);
    }
    Some(kept)
}

fn drop_invisible(w: &Widget) -> Option<Widget> {
    if !w.flags.visible {
        return None;
    }
    let mut out = w.clone();
    out.children = w.children.iter().filter_map(drop_invisible).collect();
    Some(out)
}

fn has_interaction_flag(w: &Widget) -> bool {
    let f = &w.flags;
    f.clickable || f.long_clickable || f.editable || f.scrollable || f.checkable
}

fn drop_decorative(mut w: Widget) -> Option<Widget> {
    w.children = w
        .children
        .into_iter()
        .filter_map(drop_decorative)
        .collect();
    let decorative = w.text.is_empty()
        && w.content_desc.is_empty()
        && !has_interaction_flag(&w)
        && w.children.is_empty();
    if decorative {
        None
    } else {
        Some(w)
    }
}

/// Choose the node to drop: deepest leaf, non-interactive before interactive,
/// ties broken toward the later sibling. Returns its position as child
/// indices into the *current* pruned tree.
fn pick_drop_victim(root: &Widget) -> Option<Vec<usize>> {
    // Maximise (non-interactive, depth, position): drop order is a fixed
    // sequence independent of budget, which gives prune monotonicity.
    let mut best: Option<(bool, usize, Vec<usize>)> = None;
    fn walk(w: &Widget, pos: &mut Vec<usize>, best: &mut Option<(bool, usize, Vec<usize>)>) {
        if w.children.is_empty() {
            let cand = (!w.is_interactive(), pos.len(), pos.clone());
            if best.as_ref().is_none_or(|b| cand > *b) {
                *best = Some(cand);
            }
        }
        for (i, c) in w.children.iter().enumerate() {
            pos.push(i);
            walk(c, pos, best);
            pos.pop();
        }
    }
    walk(root, &mut Vec::new(), &mut best);
    best.map(|(_, _, pos)| pos)
}

fn remove_at(root: &mut Widget, pos: &[usize]) {
    let (last, parents) = pos.split_last().expect("non-root position");
    let mut cur = root;
    for &i in parents {
        cur = &mut cur.children[i];
    }
    cur.children.remove(*last);
}

/// Interactive visible widgets of a pruned tree, pre-order. This is the
/// annotation label order.
pub fn interactive_widgets(pruned: &Widget) -> Vec<&Widget> {
    pruned
        .iter_preorder()
        .filter(|w| w.is_interactive())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Bounds, WidgetFlags};

    fn node(text: &str, interactive: bool, visible: bool, children: Vec<Widget>) -> Widget {
        Widget {
            node_path: Vec::new(),
            resource_id: String::new(),
            text: text.to_string(),
            content_desc: String::new(),
            class_name: "android.widget.View".to_string(),
            bounds: Bounds::new(0, 0, 10, 10),
            flags: WidgetFlags {
                clickable: interactive,
                enabled: true,
                visible,
                ..Default::default()
            },
            children,
        }
    }

    #[test]
    fn identity_when_under_budget_and_all_useful() {
        let mut root = node("root", false, true, vec![node("a", true, true, vec![])]);
        root.assign_node_paths();
        let pruned = prune_dom(&root, 10).unwrap();
        assert_eq!(pruned, root);
    }

    #[test]
    fn invisible_subtree_dropped_entirely() {
        let mut root = node(
            "root",
            false,
            true,
            vec![node("", false, false, vec![node("inner", true, true, vec![])])],
        );
        root.assign_node_paths();
        let pruned = prune_dom(&root, 10).unwrap();
        assert_eq!(pruned.node_count(), 1);
        assert!(pruned.children.is_empty());
    }

    #[test]
    fn decorative_chain_dropped_but_containers_with_children_kept() {
        let mut root = node(
            "root",
            false,
            true,
            vec![
                node("", false, true, vec![node("label", false, true, vec![])]),
                node("", false, true, vec![node("", false, true, vec![])]),
            ],
        );
        root.assign_node_paths();
        let pruned = prune_dom(&root, 10).unwrap();
        // Second container and its empty child vanish; first survives via its
        // text-bearing child.
        assert_eq!(pruned.children.len(), 1);
        assert_eq!(pruned.children[0].children[0].text, "label");
    }

    #[test]
    fn node_paths_refer_to_original_tree() {
        let mut root = node(
            "root",
            false,
            true,
            vec![
                node("", false, true, vec![]),
                node("keep", true, true, vec![]),
            ],
        );
        root.assign_node_paths();
        let pruned = prune_dom(&root, 10).unwrap();
        assert_eq!(pruned.children.len(), 1);
        assert_eq!(pruned.children[0].node_path, vec![1]);
    }

    #[test]
    fn budget_drops_deepest_non_interactive_first() {
        let mut root = node(
            "root",
            false,
            true,
            vec![
                node("deep", false, true, vec![node("deeper", false, true, vec![])]),
                node("btn", true, true, vec![]),
            ],
        );
        root.assign_node_paths();
        let pruned = prune_dom(&root, 3).unwrap();
        assert_eq!(pruned.node_count(), 3);
        let texts: Vec<&str> = pruned.iter_preorder().map(|w| w.text.as_str()).collect();
        assert_eq!(texts, vec!["root", "deep", "btn"]);
    }
}
