//! Merging pairwise assignments around a ring of views into person tracks.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{Assignment, MatchingError};

/// Assignment between consecutive views of the ring. Indices in the
/// assignment are detection indices of `view_a` (rows) and `view_b`
/// (columns).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RingLink {
    pub view_a: usize,
    pub view_b: usize,
    pub assignment: Assignment,
}

/// One hypothesized person: at most one detection per view.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PersonTrack {
    /// view -> detection index
    pub members: BTreeMap<usize, usize>,
    /// True when the matches around the ring close back on themselves.
    pub closed: bool,
}

impl PersonTrack {
    pub fn singleton(view: usize, det: usize) -> Self {
        Self { members: BTreeMap::from([(view, det)]), closed: false }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PersonTrackSet {
    pub persons: Vec<PersonTrack>,
    /// Edges dropped while resolving inconsistent chains.
    #[serde(default)]
    pub dropped_links: usize,
}

impl PersonTrackSet {
    /// Tracks from a known `(view, detection) -> person` map, one per person
    /// in ascending person order, all marked closed.
    pub fn from_correspondence(map: &BTreeMap<(usize, usize), usize>) -> Self {
        let mut members: BTreeMap<usize, BTreeMap<usize, usize>> = BTreeMap::new();
        for (&(v, d), &p) in map {
            members.entry(p).or_default().insert(v, d);
        }
        Self {
            persons: members.into_values().map(|members| PersonTrack { members, closed: true }).collect(),
            dropped_links: 0,
        }
    }

    /// Checks that no detection is shared between persons. At most one
    /// detection per view holds by construction of [`PersonTrack`].
    pub fn is_consistent(&self) -> bool {
        let mut seen = std::collections::HashSet::new();
        self.persons.iter().flat_map(|p| p.members.iter()).all(|(&v, &d)| seen.insert((v, d)))
    }

    /// Adds a singleton for every `(view, detection)` not covered yet.
    pub fn add_singletons(&mut self, all: impl IntoIterator<Item = (usize, usize)>) {
        let covered: std::collections::HashSet<(usize, usize)> =
            self.persons.iter().flat_map(|p| p.members.iter().map(|(&v, &d)| (v, d))).collect();
        for (v, d) in all {
            if !covered.contains(&(v, d)) {
                self.persons.push(PersonTrack::singleton(v, d));
            }
        }
        self.sort();
    }

    fn sort(&mut self) {
        self.persons.sort_by_key(|p| p.members.iter().next().map(|(&v, &d)| (v, d)));
    }
}

fn check_ring(links: &[RingLink]) -> Result<(), MatchingError> {
    let n = links.len();
    if n == 0 {
        return Ok(());
    }
    let mut views: Vec<usize> = links.iter().map(|l| l.view_a).collect();
    if n == 1 {
        if links[0].view_a == links[0].view_b {
            return Err(MatchingError::RingTopologyError("a view cannot be matched with itself".into()));
        }
        return Ok(());
    }
    for i in 0..n {
        let next = &links[(i + 1) % n];
        if links[i].view_b != next.view_a {
            return Err(MatchingError::RingTopologyError(format!(
                "link {i} ends at view {} but link {} starts at view {}",
                links[i].view_b,
                (i + 1) % n,
                next.view_a
            )));
        }
    }
    views.sort_unstable();
    views.dedup();
    if views.len() != n {
        return Err(MatchingError::RingTopologyError("a view appears more than twice".into()));
    }
    Ok(())
}

/// Merges ring assignments into persons.
///
/// Matched edges are taken in order of increasing cost. An edge joins two
/// partial persons only when they cover disjoint views; an edge inside one
/// partial person closes its cycle. Edges that would put two detections of
/// the same view into one person are dropped, so an inconsistent chain is
/// broken at its most expensive links. Every detection mentioned by any
/// link ends up in exactly one person.
pub fn merge_multiview(links: &[RingLink]) -> Result<PersonTrackSet, MatchingError> {
    check_ring(links)?;

    let mut ids: HashMap<(usize, usize), usize> = HashMap::new();
    let mut nodes: Vec<(usize, usize)> = Vec::new();
    let mut node_id = |key: (usize, usize), nodes: &mut Vec<(usize, usize)>| {
        *ids.entry(key).or_insert_with(|| {
            nodes.push(key);
            nodes.len() - 1
        })
    };
    let mut edges: Vec<(f64, usize, usize, usize)> = Vec::new();
    for (li, link) in links.iter().enumerate() {
        let a = &link.assignment;
        for &(l, m, c) in &a.pairs {
            let u = node_id((link.view_a, l), &mut nodes);
            let v = node_id((link.view_b, m), &mut nodes);
            edges.push((c, li, u, v));
        }
        for &l in &a.unmatched_a {
            node_id((link.view_a, l), &mut nodes);
        }
        for &m in &a.unmatched_b {
            node_id((link.view_b, m), &mut nodes);
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then((x.1, x.2, x.3).cmp(&(y.1, y.2, y.3))));

    let mut parent: Vec<usize> = (0..nodes.len()).collect();
    let mut groups: Vec<BTreeMap<usize, usize>> = nodes.iter().map(|&(v, d)| BTreeMap::from([(v, d)])).collect();
    let mut closed = vec![false; nodes.len()];
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    let mut dropped = 0usize;
    for &(_, _, u, v) in &edges {
        let (ru, rv) = (find(&mut parent, u), find(&mut parent, v));
        if ru == rv {
            closed[ru] = true;
            continue;
        }
        if groups[ru].keys().any(|view| groups[rv].contains_key(view)) {
            dropped += 1;
            continue;
        }
        let (keep, gone) = if groups[ru].len() >= groups[rv].len() { (ru, rv) } else { (rv, ru) };
        let moved = std::mem::take(&mut groups[gone]);
        groups[keep].extend(moved);
        closed[keep] |= closed[gone];
        parent[gone] = keep;
    }

    let mut out = PersonTrackSet { persons: Vec::new(), dropped_links: dropped };
    for i in 0..nodes.len() {
        if find(&mut parent, i) == i {
            out.persons.push(PersonTrack { members: std::mem::take(&mut groups[i]), closed: closed[i] });
        }
    }
    out.sort();
    Ok(out)
}
