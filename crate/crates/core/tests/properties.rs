use kifu_core::game::{export_sgf, parse_sgf, Color, GameMeta, GameState};
use kifu_core::geometry::{convex_hull, GridModel, LatticePoint, Point2};
use kifu_core::{Homography, Point};
use proptest::prelude::*;

fn orient(o: Point2<i64>, a: Point2<i64>, b: Point2<i64>) -> i64 {
    a.sub(o).cross(b.sub(o))
}

fn near(a: Point, b: Point, tol: f64) -> bool {
    (a.x - b.x).abs() <= tol && (a.y - b.y).abs() <= tol
}

/// Four points near the corners of a square, so no three are collinear.
fn quad() -> impl Strategy<Value = [Point; 4]> {
    prop::array::uniform8(-25.0..25.0f64).prop_map(|j| {
        [
            Point::new(100.0 + j[0], 80.0 + j[1]),
            Point::new(500.0 + j[2], 90.0 + j[3]),
            Point::new(520.0 + j[4], 420.0 + j[5]),
            Point::new(90.0 + j[6], 400.0 + j[7]),
        ]
    })
}

proptest! {
    #[test]
    fn hull_is_convex_and_encloses_every_point(pts in prop::collection::vec((-50i64..50, -50i64..50), 3..40)) {
        let pts: Vec<_> = pts.into_iter().map(|(x, y)| Point2::new(x, y)).collect();
        if let Ok(h) = convex_hull(&pts) {
            let k = h.len();
            for i in 0..k {
                let (a, b, c) = (h[i], h[(i + 1) % k], h[(i + 2) % k]);
                prop_assert!(orient(a, b, c) > 0);
                for p in &pts {
                    prop_assert!(orient(a, b, *p) >= 0);
                }
            }
        }
    }

    #[test]
    fn four_point_homography_maps_sources_to_targets(src in quad(), dst in quad()) {
        let pairs = [(src[0], dst[0]), (src[1], dst[1]), (src[2], dst[2]), (src[3], dst[3])];
        let h = Homography::from_pairs(&pairs).unwrap();
        let inv = h.inverse().unwrap();
        for (s, d) in pairs {
            prop_assert!(near(h.apply(s).unwrap(), d, 1e-6));
            prop_assert!(near(inv.apply(d).unwrap(), s, 1e-6));
        }
    }

    #[test]
    fn lattice_and_frame_coordinates_round_trip(corners in quad(), n in prop::sample::select(vec![9usize, 13, 19])) {
        let g = GridModel::from_corners(n, corners).unwrap();
        prop_assert!(near(g.lattice(0, 0), corners[0], 1e-6));
        prop_assert!(near(g.lattice(n - 1, n - 1), corners[2], 1e-6));
        for (c, r) in [(0, 0), (n / 2, 1), (n - 1, n / 3), (2, n - 1)] {
            let back = g.frame_to_lattice(g.lattice(c, r)).unwrap();
            prop_assert!(near(back, Point::new(c as f64, r as f64), 1e-6));
        }
    }

    #[test]
    fn replayed_games_keep_every_group_alive_and_survive_sgf(picks in prop::collection::vec((0usize..9, 0usize..9), 1..120)) {
        let mut state = GameState::new(9);
        for (i, (c, r)) in picks.into_iter().enumerate() {
            let color = state.to_move();
            let _ = state.on_detection(LatticePoint::new(c, r), color, i as u64);
        }
        let b = state.board();
        for p in b.points() {
            if b.get(p).is_some() {
                prop_assert!(b.group(p).1 > 0, "group at {p:?} has no liberties");
            }
        }
        prop_assert!(state.is_consistent());
        let parsed = parse_sgf(&export_sgf(state.moves(), &GameMeta::new(9))).unwrap();
        let played: Vec<(Color, Option<LatticePoint>)> = state.moves().iter().map(|m| (m.color, Some(m.point))).collect();
        let back: Vec<_> = parsed.moves.iter().map(|m| (m.color, m.point)).collect();
        prop_assert_eq!(played, back);
    }
}
