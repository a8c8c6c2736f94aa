use gram_web::{family_graph, frontier_walk, similarity};

#[test]
fn generated_graph_is_a_record() {
    let json = family_graph("grid", 12, 20, 3).unwrap();
    let v: serde_json::Value = serde_json::from_str(&json).unwrap();
    let n = v["nodes"].as_array().unwrap().len();
    assert!((12..=20).contains(&n));
    assert_eq!(v["a"], 3);
    assert!(family_graph("tree", 12, 20, 3).is_err());
    assert!(family_graph("grid", 20, 12, 3).is_err());
}

#[test]
fn frontier_walk_covers_every_link() {
    for family in ["grid", "lobster", "community", "ba"] {
        let json = family_graph(family, 16, 30, 5).unwrap();
        let walk = frontier_walk(&json, 9).unwrap();
        assert_eq!(walk.steps.len() + 1, walk.order.len());
        for (i, step) in walk.steps.iter().enumerate() {
            assert_eq!(step.node, walk.order[i + 1]);
            assert_eq!(step.frontier.last(), Some(&walk.order[i]));
            assert!(!step.links.is_empty());
            assert!(step.links.iter().all(|u| step.frontier.contains(u)), "{family} step {i}");
        }
        assert!(walk.mean_alpha >= 1.0 && walk.mean_beta >= walk.mean_alpha);
    }
}

#[test]
fn similarity_is_one_on_itself() {
    let a = family_graph("lobster", 12, 20, 1).unwrap();
    let b = family_graph("ba", 12, 20, 1).unwrap();
    assert!((similarity(&a, &a).unwrap() - 1.0).abs() < 1e-12);
    let s = similarity(&a, &b).unwrap();
    assert!((0.0..1.0).contains(&s));
    assert!(similarity(&a, "{}").is_err());
}
