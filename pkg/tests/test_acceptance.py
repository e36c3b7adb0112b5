"""Acceptance suite: one test per release criterion.

Each test exercises a full contract end to end (kernels against oracles,
reward accounting, batch semantics, throughput, gradients, learning, and
report reproducibility) and prints a single summary line with the measured
numbers, so a verbose run reads as a checklist.
"""
import dataclasses
import itertools

import numpy as np
import pytest
import torch

from levelgen.env import BatchEnv, EnvConfig, observe, reset, spawn_rngs, step, rng_from_state
from levelgen.harness import (
    BenchReport,
    bench_random_fps,
    evaluate,
    format_bench_table,
    format_eval_table,
    random_baseline,
)
from levelgen.nets import (
    ArchConfig,
    count_params,
    default_arch,
    init_policy,
    match_hidden_dims,
    save_checkpoint,
)
from levelgen.pathfind import approx_diameter, bfs_distance, count_regions, flood_distance
from levelgen.ppo import PpoConfig, env_config_dict, train
from levelgen.tiles import get_domain

from oracles import all_pairs_diameter, corridor_map, dict_bfs, dist_dict_to_grid, union_find_regions

DOMAINS = ("binary", "maze", "dungeon")

# Learning-smoke budgets, sized so the slow criteria stay well under their
# runtime envelopes on a single CPU core.
BINARY_SMOKE_STEPS = 1_500_000
MAZE_SMOKE_STEPS = 800_000


def announce(line: str) -> None:
    print(f"\n[ACCEPT] {line}")


# ---------------------------------------------------------------------------
# 1. distance and region kernels against independent oracles
# ---------------------------------------------------------------------------


def all_3x3_maps():
    for bits in itertools.product([False, True], repeat=9):
        yield np.array(bits, dtype=bool).reshape(3, 3)


def random_domain_masks(domain: str, count: int, rng: np.random.Generator) -> np.ndarray:
    """Passability masks of random tile grids drawn from the domain alphabet."""
    d = get_domain(domain)
    tiles = rng.integers(0, len(d.tiles), size=(count, 16, 16))
    passable_ids = [d.tiles.index(t) for t in d.path_passable]
    return np.isin(tiles, passable_ids)


def test_c1_flood_and_region_kernels_match_oracles():
    maps3 = list(all_3x3_maps())
    stack3 = np.stack(maps3)

    counts = count_regions(stack3)
    for i, m in enumerate(maps3):
        assert counts[i] == union_find_regions(m), f"3x3 map {i}"

    floods = 0
    for src_flat in range(9):
        seeds = np.zeros_like(stack3)
        seeds.reshape(512, 9)[:, src_flat] = True
        ok = stack3.reshape(512, 9)[:, src_flat]
        dist = flood_distance(stack3[ok], seeds[ok])
        for row, m in enumerate(np.flatnonzero(ok)):
            ref = bfs_distance(maps3[m], [divmod(src_flat, 3)])
            assert np.array_equal(dist[row], ref), f"3x3 map {m} src {src_flat}"
            floods += 1

    rng = np.random.default_rng(2024)
    checked16 = 0
    for domain in DOMAINS:
        masks = random_domain_masks(domain, 1000, rng)
        counts = count_regions(masks)
        seeds = np.zeros_like(masks)
        for i in range(len(masks)):
            assert counts[i] == union_find_regions(masks[i]), (domain, i)
            open_cells = np.argwhere(masks[i])
            if len(open_cells):
                k = int(rng.integers(1, min(4, len(open_cells)) + 1))
                picks = open_cells[rng.choice(len(open_cells), size=k, replace=False)]
                seeds[i][tuple(picks.T)] = True
        dist = flood_distance(masks, seeds)
        for i in range(len(masks)):
            srcs = [tuple(c) for c in np.argwhere(seeds[i])]
            ref = dist_dict_to_grid(masks[i], dict_bfs(masks[i], srcs))
            assert np.array_equal(dist[i], ref), (domain, i)
        checked16 += len(masks)

    announce(
        f"C1 kernels vs oracles: 512/512 exhaustive 3x3 region counts, "
        f"{floods} exhaustive 3x3 floods, {checked16} random 16x16 maps "
        f"(regions + multi-source floods) all exact  PASS"
    )


# ---------------------------------------------------------------------------
# 2. two-sweep diameter estimate against all-pairs BFS
# ---------------------------------------------------------------------------


def test_c2_diameter_estimate_bounded_and_exact_on_corridors():
    rng = np.random.default_rng(7)
    bounded = 0
    for i in range(200):
        mask = rng.random((8, 8)) < rng.uniform(0.3, 0.8)
        est, _ = approx_diameter(rng, mask)
        exact = all_pairs_diameter(mask)
        assert est <= exact, (i, est, exact)
        bounded += 1

    exact_hits = 0
    for i in range(50):
        mask = corridor_map(rng, 8, 8)
        est, _ = approx_diameter(rng, mask)
        exact = all_pairs_diameter(mask)
        assert est == exact, (i, est, exact)
        exact_hits += 1

    announce(
        f"C2 diameter estimate: lower bound held on {bounded}/200 random 8x8 maps, "
        f"exact on {exact_hits}/50 corridor maps  PASS"
    )


# ---------------------------------------------------------------------------
# 3. per-episode rewards telescope to the loss drop
# ---------------------------------------------------------------------------


def test_c3_episode_rewards_telescope_to_loss_difference():
    episodes_done = 0
    worst = 0.0
    per_domain = {"binary": 334, "maze": 333, "dungeon": 333}
    for domain, quota in per_domain.items():
        d = get_domain(domain)
        cfg = EnvConfig(
            domain=domain,
            max_width=6,
            max_height=6,
            obs_size=5,
            randomize_shape=True,
            pinpoints=d.pivotal[:2],
        )
        n = 64
        env = BatchEnv(cfg, n, seed=101)
        env.reset()
        act_rng = np.random.default_rng(55)
        cum = np.zeros(n)
        got = 0
        while got < quota:
            actions = act_rng.integers(0, cfg.n_actions, size=n)
            _, rew, done, info = env.step(actions)
            cum += rew
            if done.any():
                drop = info["episode_start_loss"][done] - info["final_loss"][done]
                gap = np.abs(cum[done] - drop)
                worst = max(worst, float(gap.max()))
                assert np.all(gap <= 1e-9), (domain, float(gap.max()))
                got += int(done.sum())
                cum[done] = 0.0
        episodes_done += got

    assert episodes_done >= 1000
    announce(
        f"C3 reward telescoping: {episodes_done} random episodes across "
        f"{len(per_domain)} domains, max |sum(r) - (L0 - LT)| = {worst:.2e} <= 1e-9  PASS"
    )


# ---------------------------------------------------------------------------
# 4. pinned and border cells survive any action stream
# ---------------------------------------------------------------------------


def test_c4_frozen_cells_never_change_under_random_actions():
    total_steps = 0
    for domain in ("maze", "dungeon"):
        d = get_domain(domain)
        cfg = EnvConfig(
            domain=domain,
            max_width=8,
            max_height=8,
            obs_size=5,
            randomize_shape=True,
            pinpoints=d.pivotal,
            max_steps=10**6,  # no episode ends inside the run: every step is inspected
        )
        n = 256
        env = BatchEnv(cfg, n, seed=31)
        env.reset()
        tiles0 = env.state_dict()["tiles"].copy()
        frozen = env.state_dict()["frozen"] | (tiles0 == d.border_id)
        assert frozen.any(), domain
        act_rng = np.random.default_rng(13)
        for _ in range(200):
            env.step(act_rng.integers(0, cfg.n_actions, size=n))
            tiles = env.state_dict()["tiles"]
            assert np.array_equal(tiles[frozen], tiles0[frozen]), domain
            total_steps += n

    assert total_steps >= 100_000
    announce(
        f"C4 frozen-tile safety: {total_steps} random steps on pinned maze/dungeon maps, "
        f"zero writes to pinned or border cells  PASS"
    )


# ---------------------------------------------------------------------------
# 5. batched stepping reproduces matched-seed scalar runs
# ---------------------------------------------------------------------------


def test_c5_batch_of_600_matches_scalar_streams():
    cfg = EnvConfig(
        domain="dungeon",
        max_width=8,
        max_height=8,
        obs_size=5,
        randomize_shape=True,
        pinpoints=("player", "key", "door"),
        change_budget=20,
    )
    n, horizon, seed = 600, 40, 77
    env = BatchEnv(cfg, n, seed=seed)
    obs = env.reset()
    act_rng = np.random.default_rng(99)
    actions_all = act_rng.integers(0, cfg.n_actions, size=(horizon, n))

    rngs = spawn_rngs(seed, n)
    states = []
    for i in range(n):
        st, ob = reset(cfg, rngs[i])
        assert ob.tobytes() == obs[i].tobytes(), f"row {i} reset"
        states.append(st)

    resets_seen = 0
    for t in range(horizon):
        obs, rew, done, _ = env.step(actions_all[t])
        for i in range(n):
            st, r, d, _ = step(states[i], int(actions_all[t, i]))
            assert r == rew[i] and d == done[i], (t, i)
            if d:
                st, ob = reset(cfg, rng_from_state(st.rng_state))
                resets_seen += 1
            else:
                ob = observe(st)
            assert ob.tobytes() == obs[i].tobytes(), (t, i)
            states[i] = st

    announce(
        f"C5 batch/scalar equivalence: 600 envs x {horizon} steps byte-identical to "
        f"600 scalar runs (rewards, dones, observations), {resets_seen} mid-stream "
        f"auto-resets covered  PASS"
    )


# ---------------------------------------------------------------------------
# 6. throughput grows with batch width
# ---------------------------------------------------------------------------


def test_c6_throughput_scales_with_batch_width():
    ladder = (1, 10, 50, 100, 200, 400, 600)
    ratios = {}
    merged = None
    for domain in DOMAINS:
        rep = bench_random_fps(domain, ladder, seconds=1.0, seed=3)
        assert [r.n_envs for r in rep.rows] == list(ladder)
        ratio = rep.fps_at(600) / rep.fps_at(1)
        assert ratio >= 5.0, (domain, ratio)
        ratios[domain] = ratio
        merged = rep if merged is None else BenchReport(machine=rep.machine, rows=merged.rows + rep.rows)

    table = format_bench_table(merged)
    for domain in DOMAINS:
        assert domain in table
    for n in ladder:
        assert str(n) in table

    pretty = ", ".join(f"{d} {r:.1f}x" for d, r in ratios.items())
    announce(f"C6 throughput scaling: fps(600)/fps(1) = {pretty}, all >= 5x  PASS")


# ---------------------------------------------------------------------------
# 7. analytic gradients against central differences
# ---------------------------------------------------------------------------


def _fd_check_model(model, x, rng, rel=1e-4):
    w_logits = torch.from_numpy(rng.standard_normal(model.arch.n_actions))
    w_value = float(rng.standard_normal())

    def f():
        logits, value = model(x)
        return (logits * w_logits).sum() + w_value * value.sum()

    model.zero_grad()
    f().backward()
    eps = 1e-6
    checked = 0
    skipped = 0
    with torch.no_grad():
        mid = f().item()
    for p in model.parameters():
        flat = p.data.view(-1)
        grad = p.grad.view(-1)
        for i in rng.choice(flat.numel(), size=min(5, flat.numel()), replace=False):
            orig = flat[i].item()
            flat[i] = orig + eps
            with torch.no_grad():
                hi = f().item()
            flat[i] = orig - eps
            with torch.no_grad():
                lo = f().item()
            flat[i] = orig
            right = (hi - mid) / eps
            left = (mid - lo) / eps
            if abs(right - left) > 1e-3 * max(abs(right), abs(left), 1.0):
                # the probe straddles a relu kink: one-sided slopes disagree,
                # so the central difference does not estimate the derivative
                skipped += 1
                continue
            fd = (hi - lo) / (2 * eps)
            an = grad[i].item()
            denom = max(abs(fd), abs(an), 1e-8)
            assert abs(fd - an) / denom < rel, (fd, an)
            checked += 1
    return checked, skipped


def test_c7_gradients_match_finite_differences():
    rng = np.random.default_rng(11)
    configs = 0
    probes = 0
    kinks = 0
    while configs < 20:
        obs = int(rng.choice([3, 5, 7, 9]))
        convs = tuple(int(c) for c in rng.choice([4, 8, 16], size=rng.integers(1, 3)))
        if obs - 2 * len(convs) < 1:
            convs = convs[:1]
        arch = ArchConfig(
            obs_size=obs,
            in_channels=int(rng.integers(2, 6)),
            n_actions=int(rng.integers(2, 8)),
            conv_channels=convs,
            fc_dims=tuple(int(d) for d in rng.choice([8, 16, 32], size=rng.integers(1, 3))),
        )
        model = init_policy(arch, seed=configs).double()
        x = torch.from_numpy(rng.standard_normal((2, arch.in_channels, obs, obs)))
        ok, skip = _fd_check_model(model, x, rng)
        probes += ok
        kinks += skip
        configs += 1
    assert kinks <= 0.02 * (probes + kinks), (kinks, probes)

    # clipped-surrogate objective on a toy tabular policy
    rng2 = np.random.default_rng(5)
    n, n_act = 32, 4
    logits0 = rng2.normal(size=(n, n_act))
    actions = torch.from_numpy(rng2.integers(0, n_act, size=n))
    old_logp = torch.from_numpy(rng2.normal(scale=0.3, size=n))
    adv = torch.from_numpy(rng2.normal(size=n))

    def surrogate(logits):
        logp = torch.log_softmax(logits, dim=-1).gather(1, actions[:, None]).squeeze(1)
        ratio = (logp - old_logp).exp()
        clipped = torch.clamp(ratio, 0.8, 1.2)
        return torch.max(-adv * ratio, -adv * clipped).mean()

    leaf = torch.tensor(logits0, dtype=torch.float64, requires_grad=True)
    surrogate(leaf).backward()
    grad = leaf.grad.numpy()
    eps = 1e-6
    for i, j in zip(rng2.integers(0, n, size=40), rng2.integers(0, n_act, size=40)):
        probe = logits0.copy()
        probe[i, j] += eps
        hi = surrogate(torch.tensor(probe, dtype=torch.float64)).item()
        probe[i, j] -= 2 * eps
        lo = surrogate(torch.tensor(probe, dtype=torch.float64)).item()
        fd = (hi - lo) / (2 * eps)
        assert fd == pytest.approx(grad[i, j], rel=1e-4, abs=1e-8)
        probes += 1

    announce(
        f"C7 gradient checks: {configs} random policy configurations + clipped "
        f"surrogate toy, {probes} central-difference probes within 1e-4 relative "
        f"({kinks} probes on relu kinks excluded)  PASS"
    )


# ---------------------------------------------------------------------------
# 8. parameter budgets track the widest-window reference
# ---------------------------------------------------------------------------


def test_c8_parameter_counts_match_reference_within_budget():
    ref = default_arch(31, 4, 3)
    budget = count_params(ref)
    rows = []
    for obs in (3, 5, 8, 16):
        arch = match_hidden_dims(obs, ref)
        n = count_params(arch)
        assert 0.9 * budget <= n <= budget, (obs, n, budget)
        rows.append(f"obs {obs}: {n}")

    announce(
        f"C8 parameter matching: reference obs 31 = {budget} params; "
        f"{'; '.join(rows)}; all within [0.9, 1.0] of reference  PASS"
    )


# ---------------------------------------------------------------------------
# 9. learning smoke tests
# ---------------------------------------------------------------------------


def test_c9_learning_beats_random_baseline(tmp_path):
    env_cfg = EnvConfig(
        domain="binary", max_width=8, max_height=8, obs_size=9, init_mode="empty"
    )
    base_mean, base_std = random_baseline(env_cfg, episodes=400, seed=123)
    bar = base_mean + 3 * base_std

    ppo = PpoConfig(
        n_envs=32, rollout_len=128, total_timesteps=BINARY_SMOKE_STEPS, lr=5e-4, seed=7
    )
    res = train(env_cfg, ppo, out_dir=tmp_path / "binary")
    assert len(res.recent_rewards) == 100
    learned = res.mean_recent_reward
    assert learned > bar, (learned, bar)

    maze_cfg = EnvConfig(
        domain="maze",
        max_width=8,
        max_height=8,
        obs_size=9,
        randomize_shape=True,
        pinpoints=("player", "door"),
    )
    ppo2 = PpoConfig(
        n_envs=32, rollout_len=128, total_timesteps=MAZE_SMOKE_STEPS, lr=1e-3, seed=7
    )
    res2 = train(maze_cfg, ppo2, out_dir=tmp_path / "maze")
    maze_mean = res2.mean_recent_reward
    assert maze_mean > 0.0, maze_mean

    announce(
        f"C9 learning smoke: binary 8x8 mean(last 100 ep) = {learned:.2f} > "
        f"baseline {base_mean:.2f} + 3*{base_std:.2f} = {bar:.2f} "
        f"({BINARY_SMOKE_STEPS} steps); pinned maze 8x8 random shapes mean = "
        f"{maze_mean:.2f} > 0 ({MAZE_SMOKE_STEPS} steps)  PASS"
    )


# ---------------------------------------------------------------------------
# 10. evaluation grid layout and byte reproducibility
# ---------------------------------------------------------------------------


def test_c10_eval_grid_full_and_byte_reproducible(tmp_path):
    env_cfg = EnvConfig(domain="maze", max_width=8, max_height=8, obs_size=5)
    arch = default_arch(5, env_cfg.observation_channels(), env_cfg.n_actions)
    model = init_policy(arch, seed=1)
    ck_path = tmp_path / "checkpoint.npz"
    save_checkpoint(ck_path, model, env_config=env_config_dict(env_cfg), step=0)

    kwargs = dict(
        widths=(8, 16, 24, 32),
        eval_shapes=(False, True),
        n_seeds=2,
        episodes_per_seed=4,
        seed=5,
    )
    rep1 = evaluate(ck_path, **kwargs)
    rep2 = evaluate(ck_path, **kwargs)
    assert rep1.to_csv() == rep2.to_csv()
    assert rep1.to_json() == rep2.to_json()

    got = [(c.eval_rand_shape, c.width) for c in rep1.cells]
    want = [(s, w) for s in (False, True) for w in (8, 16, 24, 32)]
    assert got == want
    assert all(c.episodes == 8 for c in rep1.cells)
    assert all(c.obs_size == 5 and c.trained_rand_shape is False for c in rep1.cells)

    table = format_eval_table(rep1)
    for w in (8, 16, 24, 32):
        assert str(w) in table

    announce(
        "C10 evaluation grid: full 2-shape x {8,16,24,32}-width grid emitted and "
        "byte-identical across repeated runs (CSV and JSON)  PASS"
    )
