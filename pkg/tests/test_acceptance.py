"""Acceptance criteria, one test per criterion. A summary line per criterion is printed at the end."""
import json
import math
import time

import numpy as np
import pytest
import torch

from navlab.evalkit import (
    AlwaysStopAgent,
    OracleEvalAgent,
    PolicyAgent,
    RandomAgent,
    classify_failure,
    evaluate,
    spl,
    spl_term,
)
from navlab.navctl import runs
from navlab.navctl.cli import main
from navlab.navctl.config import resolve_config
from navlab.navpolicy import AugmentConfig, NavPolicy, PolicyConfig, apply_augment, augment_batch, draw_params
from navlab.neuralcore import Attention, Conv2d, Embedding, GroupNorm, LayerNorm, Linear, LSTMCell, Mlp, TransformerBlock, grad_check
from navlab.rewardlab import (
    cycle_shaping_sum,
    hack_loop_trace,
    potential_reward,
    random_closed_walk,
    repeat_cycle,
    zer_reward,
)
from navlab.rewardlab import StepInfo
from navlab.simworld import Action, EnvConfig, NavEnv, read_demos, sample_episodes
from navlab.trainers import (
    bc_evaluate,
    bc_update,
    build_demo_dataset,
    collate_demos,
    make_bc_optimizer,
    read_metrics,
)
from navlab.vitenc import CompressionLayer, ViTConfig, create_compression_layer, mae_loss, mae_mask

from test_evalkit import FIXTURES
from test_rewardlab import ZER_TABLE

# scenes never used for training (train 0-199) or validation (10000-10019)
TEST_SCENES = list(range(20_000, 20_050))
TEST_EPISODE_SEED = 7


def detail(record_property, text: str) -> None:
    record_property("detail", text)
    print(text)


# ---- 1 ----------------------------------------------------------------------------

def test_criterion_01_compression_sizing(record_property):
    cases = [((384, 64, 2048), 2048), ((768, 196, 2048), 1960), ((192, 16, 2048), 2048)]
    got = [create_compression_layer(*args).output_size for args, _ in cases]
    detail(record_property, f"outputs {got}")
    assert got == [want for _, want in cases]


# ---- 2 ----------------------------------------------------------------------------

def _layer_cases(rng_seed: int):
    g = torch.Generator().manual_seed(rng_seed)
    r = lambda lo, hi: int(torch.randint(lo, hi + 1, (1,), generator=g))  # noqa: E731
    n, d, h = r(1, 3), 2 * r(2, 4), r(2, 5)
    heads = 2
    c_in, c_out, side = r(1, 3), r(2, 4), r(3, 5)
    length = r(2, 5)
    yield "linear", Linear(d, h), lambda: torch.randn(n, d, dtype=torch.float64, generator=g)
    yield "conv2d", Conv2d(c_in, c_out, 3, bias=True), lambda: torch.randn(n, c_in, side, side, dtype=torch.float64, generator=g)
    yield "group_norm", GroupNorm(1, c_out), lambda: torch.randn(n, c_out, side, side, dtype=torch.float64, generator=g)
    yield "layer_norm", LayerNorm(d), lambda: torch.randn(n, length, d, dtype=torch.float64, generator=g)
    yield "attention", Attention(d, heads), lambda: torch.randn(n, length, d, dtype=torch.float64, generator=g)
    yield "mlp", Mlp(d, 2 * d), lambda: torch.randn(n, length, d, dtype=torch.float64, generator=g)
    yield "transformer_block", TransformerBlock(d, heads, 2.0), lambda: torch.randn(n, length, d, dtype=torch.float64, generator=g)
    spec = create_compression_layer(d, 16, 64)
    yield "compression", CompressionLayer(spec), lambda: torch.randn(n, 16, d, dtype=torch.float64, generator=g)


def test_criterion_02_gradient_audit(record_property):
    t0 = time.perf_counter()
    worst: dict[str, float] = {}
    for seed in range(3):
        torch.manual_seed(seed)
        for name, layer, make_x in _layer_cases(seed):
            layer = layer.double()
            with torch.no_grad():
                for p in layer.parameters():
                    p.add_(0.1 * torch.randn_like(p))
            x = make_x().requires_grad_(True)
            proj = torch.randn_like(layer(x))
            params = {f"p.{k}": v for k, v in layer.named_parameters()}
            params["x"] = x
            err = grad_check(lambda: (layer(x) * proj).sum(), params, max_checks_per_param=30, seed=seed)
            worst[name] = max(worst.get(name, 0.0), err)
        # embedding: gradient flows to the table only
        emb = Embedding(5, 3).double()
        idx = torch.tensor([0, 3, 3, 1])
        proj = torch.randn(4, 3, dtype=torch.float64)
        worst["embedding"] = max(worst.get("embedding", 0.0),
                                 grad_check(lambda: (emb(idx) * proj).sum(), dict(emb.named_parameters())))
        # LSTM cell unrolled over a few steps
        din, hid = 3 + seed, 2 + seed
        cell = LSTMCell(din, hid).double()
        xs = torch.randn(3, 2, din, dtype=torch.float64, requires_grad=True)

        def unrolled():
            state = cell.initial_state(2)
            out = 0.0
            for t in range(xs.shape[0]):
                state = cell(xs[t], state)
                out = out + state[0].sum() * (t + 1) + state[1].pow(2).sum()
            return out

        worst["lstm"] = max(worst.get("lstm", 0.0), grad_check(unrolled, {**dict(cell.named_parameters()), "xs": xs}))
        # full image -> (logits, value) pipeline
        image = [8, 16, 8][seed]
        vit = ViTConfig(image_size=image, patch_size=4, embed_dim=8, depth=1, num_heads=2)
        pol = NavPolicy(PolicyConfig(encoder=vit, approx_output_size=32, lstm_hidden=6, action_embed_dim=4,
                                     goal_embed_dim=4, goal_mode=["image", "image", "category"][seed])).double()
        with torch.no_grad():
            for p in pol.parameters():
                p.add_(0.3 * torch.randn_like(p))
            pol.lstm.weight_ih.mul_(0.2)
        b = seed + 1
        obs = {"rgb": torch.rand(b, 3, image, image, dtype=torch.float64)}
        obs["goal"] = torch.rand(b, 3, image, image, dtype=torch.float64) if seed < 2 else torch.randint(0, 6, (b,))
        proj = torch.randn(b, 5, dtype=torch.float64)

        def pipeline():
            # two steps so the recurrent weights and previous-action embedding get gradient
            logits, value, st = pol(obs, pol.initial_state(b))
            logits2, value2, _ = pol(obs, st.with_action(torch.zeros(b, dtype=torch.long)))
            out = torch.cat([torch.log_softmax(logits2, -1), value2.unsqueeze(-1)], -1)
            return (out * proj).sum() + value.sum()

        # step 1e-5 keeps central-difference round-off below the tiny encoder gradients
        worst["pipeline"] = max(worst.get("pipeline", 0.0),
                                grad_check(pipeline, dict(pol.named_parameters()), fd_epsilon=1e-5,
                                           max_checks_per_param=10, seed=seed))
    elapsed = time.perf_counter() - t0
    detail(record_property, f"max rel err {max(worst.values()):.2e} over {len(worst)} layer kinds x 3 shapes, {elapsed:.0f}s")
    assert all(v < 1e-4 for v in worst.values()), " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    assert elapsed < 60


# ---- 3 ----------------------------------------------------------------------------

def test_criterion_03_reward_hacking(record_property):
    loop = hack_loop_trace()
    assert len(loop) == 15 and (loop[0].d, loop[0].theta) == (loop[-1].d, loop[-1].theta)
    zer = cycle_shaping_sum(loop, zer_reward)
    pot = cycle_shaping_sum(loop, potential_reward)
    assert abs(zer.total - (math.pi - 0.14)) < 1e-9 and zer.total > 0 and zer.hackable
    assert abs(pot.total + 0.14) < 1e-9 and not pot.hackable
    for n in (2, 5, 10):
        assert abs(cycle_shaping_sum(repeat_cycle(loop, n), zer_reward).total - n * (math.pi - 0.14)) < 1e-9 * n
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(1000):
        walk = random_closed_walk(rng, int(rng.integers(2, 40)))
        a = cycle_shaping_sum(walk, potential_reward)
        worst = max(worst, abs(a.angle_term_sum + a.distance_term_sum))
    detail(record_property, f"ZER {zer.total:.12f}, potential {pot.total:.12f}, max |shaping| over 1000 loops {worst:.1e}")
    assert worst < 1e-9


# ---- 4 ----------------------------------------------------------------------------

def test_criterion_04_zer_table(record_property):
    assert len(ZER_TABLE) == 20
    errs = [abs(zer_reward(StepInfo(pd, pt, Action.MOVE_FORWARD), StepInfo(cd, ct, act))[0] - want)
            for pd, pt, cd, ct, act, want in ZER_TABLE]
    detail(record_property, f"max abs err {max(errs):.1e}")
    assert max(errs) < 1e-12


# ---- 5 ----------------------------------------------------------------------------

def test_criterion_05_metrics(record_property):
    t0 = time.perf_counter()
    assert spl_term(True, 3.0, 3.0) == 1.0 and spl_term(False, 3.0, 3.0) == 0.0 and spl_term(True, 4.0, 5.0) == 0.8
    assert spl([(True, 4.0, 5.0), (False, 2.0, 2.0)]) == 0.4
    env_cfg = EnvConfig(obs_mode="vector")
    episodes = sample_episodes(list(range(10_000, 10_020)), 100, 2024, env_cfg.episode)
    for seed in range(50):
        idx = np.random.default_rng(seed).choice(100, 4, replace=False)
        agent = OracleEvalAgent() if seed % 2 else RandomAgent()
        r = evaluate(agent, [episodes[i] for i in idx], env_cfg, seed)
        assert r.spl <= r.success_rate
    oracle = evaluate(OracleEvalAgent(), episodes, env_cfg, 0)
    stop = evaluate(AlwaysStopAgent(), episodes, env_cfg, 0)
    elapsed = time.perf_counter() - t0
    detail(record_property, f"oracle SR {oracle.success_rate:.3f} SPL {oracle.spl:.3f}; always-stop SR {stop.success_rate}; {elapsed:.0f}s")
    assert oracle.success_rate == 1.0 and oracle.spl >= 0.8
    assert elapsed < 120


# ---- 6 ----------------------------------------------------------------------------

def test_criterion_06_failure_classifier(record_property):
    correct = sum(classify_failure(t) == want for t, want in FIXTURES)
    detail(record_property, f"{correct}/{len(FIXTURES)} fixtures")
    assert len(FIXTURES) >= 10 and correct == len(FIXTURES)


# ---- 7 ----------------------------------------------------------------------------

def _test_episodes(cfg, n=200):
    return sample_episodes(TEST_SCENES, n, TEST_EPISODE_SEED, cfg.episode_config(), "test")


@pytest.mark.slow
def test_criterion_07_ppo_vector_sanity(record_property, tmp_path):
    lines, passed = [], 0
    for seed in range(3):
        cfg = resolve_config(None, "vector-sanity", [{"seed": seed, "output_dir": str(tmp_path / f"s{seed}")}], environ={})
        t0 = time.perf_counter()
        runs.train_ppo(cfg)
        minutes = (time.perf_counter() - t0) / 60
        policy, header, _ = runs.load_policy_checkpoint(tmp_path / f"s{seed}" / "best.ckpt")
        report = evaluate(PolicyAgent(policy, None), _test_episodes(cfg), cfg.env_config(), seed)
        ok = report.success_rate >= 0.9 and header["env_steps"] <= 2_000_000 and minutes <= 30
        passed += ok
        lines.append(f"seed {seed}: SR {report.success_rate:.3f} at {header['env_steps']} steps, {minutes:.1f} min")
    detail(record_property, "; ".join(lines))
    assert passed == 3


# ---- 8 ----------------------------------------------------------------------------

PROBE_UPDATES = 20


@pytest.mark.slow
def test_criterion_08_image_imagenav(record_property, tmp_path):
    lines, passed = [], 0
    for seed in range(3):
        out = tmp_path / f"s{seed}"
        cfg = resolve_config(None, "imagenav-desk", [{"seed": seed, "output_dir": str(out)}], environ={})
        steps_per_update = cfg.ppo.num_envs * cfg.ppo.rollout_length
        t0 = time.perf_counter()
        runs.train_ppo(cfg, max_updates=PROBE_UPDATES)
        # projected from the probe's training updates (the closing validation pass is excluded);
        # a run that cannot finish inside 4 h is not started in full
        probe = read_metrics(out / "metrics.jsonl")
        per_update = probe[-2]["wall_clock"] / (len(probe) - 1)
        projected_h = per_update * cfg.ppo.total_steps / steps_per_update / 3600
        if projected_h > 4:
            lines.append(f"seed {seed}: projected {projected_h:.1f} h for {cfg.ppo.total_steps} steps "
                         f"({steps_per_update / per_update:.0f} steps/s), over budget")
            continue
        runs.train_ppo(cfg, resume=out / "last.ckpt")
        hours = (time.perf_counter() - t0) / 3600
        episodes = _test_episodes(cfg)
        policy, header, _ = runs.load_policy_checkpoint(out / "last.ckpt")
        trained = evaluate(PolicyAgent(policy, cfg.augment_config()), episodes, cfg.env_config(), seed).success_rate
        random_sr = evaluate(RandomAgent(), episodes, cfg.env_config(), seed).success_rate
        # a zero random baseline would make "3x" vacuous; require actual successes too
        ok = trained >= 3 * random_sr and trained > 0 and hours <= 4 and header["env_steps"] >= cfg.ppo.total_steps
        passed += ok
        lines.append(f"seed {seed}: trained SR {trained:.3f} vs random {random_sr:.3f}, {hours:.2f} h")
    detail(record_property, "; ".join(lines))
    assert passed >= 2


# ---- 9 ----------------------------------------------------------------------------

@pytest.fixture(scope="session")
def mae_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("mae")
    cfg = resolve_config(None, "imagenav-desk", [{"output_dir": str(out)}], environ={})
    t0 = time.perf_counter()
    summary = runs.pretrain_mae(cfg)
    summary["minutes"] = (time.perf_counter() - t0) / 60
    summary["checkpoint"] = str(out / "mae.ckpt")
    return summary


def test_criterion_09_mae(record_property, mae_run):
    # masked-only loss: perturbing predictions at visible patches changes nothing, bit for bit
    torch.manual_seed(0)
    pred = torch.randn(4, 64, 192)
    target = torch.randn(4, 64, 192)
    mask = mae_mask(64, 0.75, np.random.default_rng(0))
    visible = torch.ones(64, dtype=torch.bool)
    visible[torch.as_tensor(mask.masked_indices)] = False
    perturbed = pred.clone()
    perturbed[:, visible] += 100.0 * torch.randn_like(perturbed[:, visible])
    for norm in (True, False):
        assert torch.equal(mae_loss(pred, target, mask, norm), mae_loss(perturbed, target, mask, norm))
    ratio = mae_run["final_val_loss"] / mae_run["initial_val_loss"]
    detail(record_property, f"held-out masked loss {mae_run['initial_val_loss']:.3f} -> {mae_run['final_val_loss']:.3f} "
                            f"(ratio {ratio:.3f}), {mae_run['minutes']:.1f} min")
    assert ratio <= 0.5
    assert mae_run["minutes"] <= 20


# ---- 10 ---------------------------------------------------------------------------

def test_criterion_10_behavior_cloning(record_property, tmp_path, mae_run):
    # the demonstration recipe targets ObjectNav; same tiny ViT as the MAE run
    base = resolve_config(None, "objectnav-desk", [{"output_dir": str(tmp_path)}], environ={})
    t0 = time.perf_counter()
    demos = runs.gen_demos(base, tmp_path / "demos.jsonl", 500)
    scratch = runs.train_bc(base, demos, tmp_path / "scratch")
    minutes = (time.perf_counter() - t0) / 60
    pre_cfg = resolve_config(None, "objectnav-desk", [{"output_dir": str(tmp_path / "pre"),
                                                       "pretrained_encoder": mae_run["checkpoint"]}], environ={})
    pretrained = runs.train_bc(pre_cfg, demos, tmp_path / "pre")

    # memorization: 10 episodes, at most 200 updates
    _, records = read_demos(demos)
    env = NavEnv([r["episode"] for r in records[:10]], base.env_config(), 0)
    memo = build_demo_dataset(records[:10], env)
    torch.manual_seed(0)
    policy = NavPolicy(base.policy_config())
    opt = make_bc_optimizer(policy, base.bc_config())
    batch = collate_demos(memo)
    steps, acc = 0, 0.0
    for steps in range(1, 201):
        bc_update(batch, policy, opt, base.bc_config())
        acc = bc_evaluate(memo, policy)["action_accuracy"]
        if acc >= 0.95:
            break
    detail(record_property,
           f"held-out acc scratch {scratch['val_accuracy']:.3f} / MAE-pretrained {pretrained['val_accuracy']:.3f}; "
           f"memorization {acc:.3f} after {steps} steps; {minutes:.1f} min")
    assert scratch["val_accuracy"] >= 0.8
    assert acc >= 0.95
    assert minutes <= 20


# ---- 11 ---------------------------------------------------------------------------

def test_criterion_11_determinism(record_property, tmp_path):
    from navlab.navpolicy import save_policy

    cfg = resolve_config(None, "imagenav-desk", [], environ={})
    torch.manual_seed(0)
    policy = NavPolicy(cfg.policy_config())
    with torch.no_grad():
        policy.actor.weight.normal_(0, 0.1)
    ckpt = tmp_path / "policy.ckpt"
    save_policy(ckpt, policy)
    outputs = []
    for run in ("a", "b"):
        out = tmp_path / run
        assert main(["eval", "--preset", "imagenav-desk", "--checkpoint", str(ckpt), "--episodes", "6",
                     "--seed", "4", "--output-dir", str(out)]) == 0
        assert main(["gen-demos", "--preset", "imagenav-desk", "--num", "5", "--seed", "4",
                     "--output-dir", str(out)]) == 0
        outputs.append({n: (out / n).read_bytes() for n in ("report.json", "report.csv", "demos.jsonl")})
    same = [n for n in outputs[0] if outputs[0][n] == outputs[1][n]]
    detail(record_property, f"identical: {', '.join(same)}")
    assert same == list(outputs[0])
    assert json.loads(outputs[0]["report.json"])["num_episodes"] == 6


# ---- 12 ---------------------------------------------------------------------------

def test_criterion_12_augmentation_contract(record_property):
    x = torch.rand(6, 3, 32, 32)
    identity = AugmentConfig(0.0, 0)
    assert augment_batch(x, identity, 0) is x
    assert torch.equal(apply_augment(x, draw_params(identity, 1), identity), x)
    cfg = AugmentConfig(0.4, 16)
    batch = x[:1].repeat(6, 1, 1, 1)
    rng = np.random.default_rng(11)
    before = rng.bit_generator.state
    out = augment_batch(batch, cfg, rng)
    after = rng.bit_generator.state
    rng.bit_generator.state = before
    params = draw_params(cfg, rng)
    assert rng.bit_generator.state == after  # exactly one parameter draw consumed for the whole batch
    assert all(torch.equal(out[i], out[0]) for i in range(6))
    assert torch.equal(out[0], apply_augment(batch[:1], params, cfg)[0])
    detail(record_property, f"identity bit-exact; one draw shared by batch of 6 (shift {params.shift})")
