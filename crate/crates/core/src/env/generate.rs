//! Random task generation on four-room maps.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{EnvConfig, EnvError, LayoutId, Objects, Pos};

const MAX_ATTEMPTS: usize = 256;

/// Samples new key, door and treasure positions on the map of `base`.
///
/// The door always sits in a doorway and the treasure in one of the two rooms
/// that doorway joins. For `kdt1` the key is placed in the other room joined
/// by the door; for `kdt2` it goes into a room the door does not touch.
pub fn generate_task(base: &EnvConfig, seed: u64) -> Result<EnvConfig, EnvError> {
    let key_beside_door = match base.layout {
        LayoutId::Kdt1 => true,
        LayoutId::Kdt2 => false,
        other => {
            return Err(EnvError::Generation(format!("no placement rule for layout {other:?}")));
        }
    };
    let layout = base.map()?;
    let rooms = layout.rooms();
    let doorways: Vec<(Pos, Vec<usize>)> =
        layout.doorways().into_iter().filter(|(_, adj)| adj.len() == 2).collect();
    if doorways.is_empty() {
        return Err(EnvError::Generation("map has no doorway joining two rooms".into()));
    }
    let start = layout.start();
    let candidates = |room: usize, taken: &[Pos]| -> Vec<Pos> {
        rooms[room].iter().copied().filter(|p| *p != start && !taken.contains(p)).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..MAX_ATTEMPTS {
        let (door, adj) = doorways.choose(&mut rng).expect("nonempty");
        let (near, far) = if rng.gen::<bool>() { (adj[0], adj[1]) } else { (adj[1], adj[0]) };
        let key_room = if key_beside_door {
            near
        } else {
            let others: Vec<usize> = (0..rooms.len()).filter(|r| !adj.contains(r)).collect();
            match others.choose(&mut rng) {
                Some(r) => *r,
                None => {
                    return Err(EnvError::Generation("kdt2 needs a room not touching the door".into()));
                }
            }
        };
        let key_cells = candidates(key_room, &[*door]);
        let Some(&key) = key_cells.choose(&mut rng) else { continue };
        let treasure_cells = candidates(far, &[*door, key]);
        if key_cells.len() + treasure_cells.len() < 3 {
            continue;
        }
        let Some(&treasure) = treasure_cells.choose(&mut rng) else { continue };
        return Ok(EnvConfig {
            layout: LayoutId::Generated,
            map_file: base.map_file.clone(),
            objects: Some(Objects { key, door: Some(*door), treasure: Some(treasure) }),
            ..base.clone()
        });
    }
    Err(EnvError::Generation("placement constraints could not be satisfied".into()))
}

/// Reflects every object about the vertical midline of the map.
pub fn mirror_task(config: &EnvConfig) -> Result<EnvConfig, EnvError> {
    let layout = config.map()?;
    let objects = config.resolve_objects(&layout)?;
    let mirrored = Objects {
        key: layout.mirror_x(objects.key),
        door: objects.door.map(|p| layout.mirror_x(p)),
        treasure: objects.treasure.map(|p| layout.mirror_x(p)),
    };
    let mut out = EnvConfig { layout: LayoutId::Generated, objects: Some(mirrored), ..config.clone() };
    if config.layout != LayoutId::Generated && config.map_file.is_none() {
        // Keep pointing at the same built-in map.
        out.layout = config.layout;
    }
    // Validate placement against the map.
    super::GridEnv::new(&out).map_err(|e| EnvError::Generation(format!("mirrored task invalid: {e}")))?;
    Ok(out)
}

/// The same task without its treasure: done once the door is open.
pub fn strip_treasure(config: &EnvConfig) -> Result<EnvConfig, EnvError> {
    let layout = config.map()?;
    let mut objects = config.resolve_objects(&layout)?;
    objects.treasure = None;
    Ok(EnvConfig { objects: Some(objects), ..config.clone() })
}

#[cfg(test)]
mod tests {
    use std::collections::{BTreeSet, VecDeque};

    use super::*;
    use crate::env::{Action, GridEnv, GridState, Inventory, Layout};

    /// Breadth-first search over (position, inventory) with noise-free moves.
    fn bfs_solves(env: &GridEnv) -> bool {
        let start = env.reset();
        let mut seen = BTreeSet::from([(start.pos, start.inventory)]);
        let mut queue = VecDeque::from([start]);
        while let Some(s) = queue.pop_front() {
            if env.is_complete(&s) {
                return true;
            }
            for a in Action::ALL {
                let pos = env.move_from(s.pos, a);
                let inventory = env.interact(pos, s.inventory);
                if seen.insert((pos, inventory)) {
                    queue.push_back(GridState { pos, inventory, ..s });
                }
            }
        }
        false
    }

    fn room_of(layout: &Layout, p: Pos) -> Option<usize> {
        layout.rooms().iter().position(|r| r.contains(&p))
    }

    #[test]
    fn seeds_give_different_solvable_tasks() {
        let a = generate_task(&EnvConfig::kdt1(), 1).unwrap();
        let b = generate_task(&EnvConfig::kdt1(), 2).unwrap();
        assert_ne!(a.objects, b.objects);
        for cfg in [a, b] {
            assert!(bfs_solves(&GridEnv::new(&cfg).unwrap()));
        }
    }

    #[test]
    fn kdt1_key_shares_a_room_with_the_door() {
        let layout = Layout::kdt1();
        let doorways = layout.doorways();
        for seed in 0..50 {
            let o = generate_task(&EnvConfig::kdt1(), seed).unwrap().objects.unwrap();
            let door = o.door.unwrap();
            let (_, adj) = doorways.iter().find(|(p, _)| *p == door).expect("door in a doorway");
            assert!(adj.contains(&room_of(&layout, o.key).unwrap()));
            assert!(adj.contains(&room_of(&layout, o.treasure.unwrap()).unwrap()));
            assert_ne!(room_of(&layout, o.key), room_of(&layout, o.treasure.unwrap()));
        }
    }

    #[test]
    fn kdt2_key_is_away_from_the_door() {
        let layout = Layout::kdt2();
        let doorways = layout.doorways();
        for seed in 0..50 {
            let cfg = generate_task(&EnvConfig::kdt2(), seed).unwrap();
            let o = cfg.objects.unwrap();
            let (_, adj) = doorways.iter().find(|(p, _)| Some(*p) == o.door).unwrap();
            assert!(!adj.contains(&room_of(&layout, o.key).unwrap()));
            assert!(bfs_solves(&GridEnv::new(&cfg).unwrap()));
        }
    }

    #[test]
    fn mirrored_objects_reflect_x() {
        let cfg = generate_task(&EnvConfig::kdt1(), 9).unwrap();
        let m = mirror_task(&cfg).unwrap();
        let (o, mo) = (cfg.objects.unwrap(), m.objects.unwrap());
        assert_eq!(mo.key, Pos::new(18 - o.key.x, o.key.y));
        assert_eq!(mo.door.unwrap(), Pos::new(18 - o.door.unwrap().x, o.door.unwrap().y));
        assert_eq!(mo.treasure.unwrap().y, o.treasure.unwrap().y);
        assert!(bfs_solves(&GridEnv::new(&m).unwrap()));
    }

    #[test]
    fn hazard_has_no_generator() {
        assert!(matches!(generate_task(&EnvConfig::hazard(), 0), Err(EnvError::Generation(_))));
    }

    #[test]
    fn stripped_task_ends_at_the_door() {
        let cfg = strip_treasure(&EnvConfig::kdt1()).unwrap();
        let env = GridEnv::new(&cfg).unwrap();
        assert_eq!(env.goal(), Inventory::EMPTY.with(Inventory::KEY).with(Inventory::DOOR));
        assert!(bfs_solves(&env));
    }
}
