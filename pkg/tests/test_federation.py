"""Round orchestration: sampling, distribution, decoupled updates,
shell-wise aggregation, and the baseline mode table."""

from __future__ import annotations

import numpy as np
import pytest

from fedsplitx import nn, zoo
from fedsplitx.accounting import CostLedger
from fedsplitx.data import DatasetShard, make_synthetic, iid_partition
from fedsplitx.federation import (AggregationWeights, ClientProfile,
                                  Federation, ShellPayload,
                                  ShellUpdate, client_entity, client_update,
                                  distribute, get_smashed_data, heteroavg,
                                  parse_mode, pool_sides, run_round,
                                  sample_clients, server_update,
                                  vanilla_sfl_update)
from fedsplitx.nn import SgdConfig
from fedsplitx.split import split


def scalar_update(cid, level, side, values, num_levels=3, head=None):
    """ShellUpdate whose shells hold one scalar 'block' array each."""
    shells = {}
    for m, v in values.items():
        arr = np.array([np.float32(v)], dtype=np.float32)
        shells[m] = ShellPayload([arr], head)
    return ShellUpdate(cid, level, side, shells)


def make_federation(mode="fedsplitx", seed=0, clients=6, counts=(2, 2, 2),
                    samples=120, lr=0.1, epochs=1, batch=16, fraction=0.5,
                    classes=3):
    ds = make_synthetic("blobs", samples, classes, 0.5, seed)
    shards = iid_partition(ds, clients, seed)
    levels = []
    for lv, c in enumerate(counts, start=1):
        levels += [lv] * c
    profiles = [ClientProfile(s.owner, levels[s.owner], len(s)) for s in shards]
    model, plan = zoo.build("toy-mlp-s", classes=classes, seed=seed, input_dim=2)
    return Federation(model=model, profiles=profiles,
                      shards={s.owner: s for s in shards},
                      mode=parse_mode(mode),
                      sgd=SgdConfig(lr, batch, epochs),
                      fraction=fraction, seed=seed)


class TestSampling:
    def test_full_fraction_selects_everyone(self):
        plan = sample_clients(0, 8, 1.0, seed=3)
        assert plan.selected == tuple(range(8))

    def test_paper_fraction(self):
        # 10% of 50 clients -> 5 per round
        plan = sample_clients(7, 50, 0.1, seed=1)
        assert len(plan.selected) == 5
        assert len(set(plan.selected)) == 5

    def test_deterministic_in_seed_and_round(self):
        a = sample_clients(3, 20, 0.3, seed=9)
        b = sample_clients(3, 20, 0.3, seed=9)
        c = sample_clients(4, 20, 0.3, seed=9)
        assert a.selected == b.selected
        assert a.selected != c.selected or True  # different round may differ

    def test_tiny_fraction_selects_one(self):
        plan = sample_clients(0, 50, 0.01, seed=0)
        assert len(plan.selected) == 1

    def test_fraction_bounds(self):
        with pytest.raises(ValueError):
            sample_clients(0, 5, 0.0, seed=0)
        with pytest.raises(ValueError):
            sample_clients(0, 5, 1.5, seed=0)

    def test_eligible_pool_respected(self):
        plan = sample_clients(2, 50, 0.2, seed=5, eligible=[40, 41, 42])
        assert set(plan.selected) <= {40, 41, 42}


class TestModeTable:
    def test_exc_requires_level(self):
        with pytest.raises(ValueError, match="level"):
            parse_mode("exc")

    def test_fedsplitx_rejects_level(self):
        with pytest.raises(ValueError):
            parse_mode("fedsplitx:2")

    def test_ablation_alias(self):
        assert parse_mode("fedsplitx-no-auxnet").name == "no-auxnet"

    def test_unknown_mode(self):
        with pytest.raises(ValueError, match="unknown"):
            parse_mode("fedprox")

    def test_paper_fleet_exc3_eligibility(self):
        # 16/16/18 fleet: exclusive learning at level 3 admits 18 of 50
        fed = make_federation(mode="exc:3", clients=50, counts=(16, 16, 18),
                              samples=500, fraction=0.1)
        assert len(fed.eligible_ids()) == 18


class TestDistribute:
    def test_boundary_levels(self):
        fed = make_federation()
        sm_hi = distribute(fed.segments, ClientProfile(0, 3, 10))
        assert len(sm_hi.client_heads) == 3 and sm_hi.server_heads == []
        sm_lo = distribute(fed.segments, ClientProfile(1, 1, 10))
        assert len(sm_lo.client_heads) == 1 and len(sm_lo.server_heads) == 2

    def test_copy_isolation(self):
        fed = make_federation()
        before = fed.model.blocks[0].W.copy()
        sm = distribute(fed.segments, ClientProfile(0, 2, 10))
        sm.client_blocks[0].W += 5.0
        sm.server_blocks[0].W += 5.0
        np.testing.assert_array_equal(fed.model.blocks[0].W, before)


class TestShellBookkeeping:
    def test_shells_partition_every_parameter_exactly_once(self):
        fed = make_federation()
        seen = set()
        total = 0
        for m in range(1, fed.segments.num_shells + 1):
            blocks, head = fed.segments.parts(m)
            for arr in blocks + head:
                assert id(arr) not in seen
                seen.add(id(arr))
                total += arr.size
        all_params = sum(p.size for layer in fed.model.all_layers()
                         for p in layer.params())
        assert total == all_params

    def test_client_server_shell_split_matches_level(self):
        fed = make_federation()
        sm = split(fed.model, 2)
        for m in (1, 2):
            blocks, head = sm.client_shell_parts(m)
            g_blocks, g_head = fed.segments.parts(m)
            assert [a.shape for a in blocks] == [a.shape for a in g_blocks]
            assert [a.shape for a in head] == [a.shape for a in g_head]
        for m in (3, 4):
            blocks, head = sm.server_shell_parts(m)
            g_blocks, g_head = fed.segments.parts(m)
            assert [a.shape for a in blocks] == [a.shape for a in g_blocks]


class TestHeteroAvg:
    def test_hand_average_oracle(self):
        """Participants at levels (1,2,3) with scalar shells: shell-1 values
        (3,6,9) -> 6; shell-2 (4,8) -> 6; shell-3 (5) -> 5."""
        ups = [
            scalar_update(0, 1, "client", {1: 3.0}),
            scalar_update(1, 2, "client", {1: 6.0, 2: 4.0}),
            scalar_update(2, 3, "client", {1: 9.0, 2: 8.0, 3: 5.0}),
        ]
        merged = heteroavg(ups, num_levels=3)
        assert merged[(1, "blocks")].mean[0][0] == 6.0
        assert merged[(2, "blocks")].mean[0][0] == 6.0
        assert merged[(3, "blocks")].mean[0][0] == 5.0
        assert merged[(1, "blocks")].count == 3
        assert merged[(2, "blocks")].count == 2
        assert merged[(3, "blocks")].count == 1

    def test_weights_bookkeeping_validated(self):
        ups = [scalar_update(0, 1, "client", {1: 3.0}),
               scalar_update(1, 2, "client", {1: 6.0, 2: 4.0})]
        w = AggregationWeights(3, (1, 2))
        heteroavg(ups, 3, weights=w)  # consistent: no error
        bad = AggregationWeights(3, (2, 2))
        with pytest.raises(ValueError, match="contributors"):
            heteroavg(ups, 3, weights=bad)

    def test_idempotence_on_identical_shells(self):
        v = {1: 7.5, 2: -2.25, 3: 1.125}
        ups = [scalar_update(i, 3, "client", v) for i in range(4)]
        merged = heteroavg(ups, 3)
        for m, val in v.items():
            assert merged[(m, "blocks")].mean[0][0] == np.float32(val)

    def test_single_participant_passthrough(self):
        ups = [scalar_update(0, 2, "client", {1: 0.3, 2: 0.7})]
        merged = heteroavg(ups, 3)
        assert merged[(1, "blocks")].mean[0][0] == np.float32(0.3)
        assert merged[(2, "blocks")].mean[0][0] == np.float32(0.7)

    def test_brute_force_oracle_small_cases(self):
        """<=5 participants, scalar shells: mean over the right contributor
        sets, computed by explicit enumeration."""
        rng = np.random.default_rng(11)
        for trial in range(20):
            n = int(rng.integers(1, 6))
            levels = [int(rng.integers(1, 4)) for _ in range(n)]
            vals = {i: {m: float(np.float32(rng.normal()))
                        for m in range(1, levels[i] + 1)} for i in range(n)}
            ups = [scalar_update(i, levels[i], "client", vals[i]) for i in range(n)]
            merged = heteroavg(ups, 3)
            for m in range(1, 4):
                contributors = [vals[i][m] for i in range(n) if levels[i] >= m]
                if not contributors:
                    assert (m, "blocks") not in merged
                    continue
                expect = np.float32(np.sum(np.asarray(contributors, dtype=np.float64))
                                    / len(contributors))
                assert merged[(m, "blocks")].mean[0][0] == expect

    def test_wrong_shell_set_rejected(self):
        up = scalar_update(0, 2, "client", {1: 1.0})  # missing shell 2
        with pytest.raises(ValueError, match="expected"):
            heteroavg([up], 3)

    def test_shape_mismatch_rejected(self):
        a = ShellUpdate(0, 1, "client",
                        {1: ShellPayload([np.zeros(2, dtype=np.float32)], None)})
        b = ShellUpdate(1, 1, "client",
                        {1: ShellPayload([np.zeros(3, dtype=np.float32)], None)})
        with pytest.raises(ValueError, match="shape"):
            heteroavg([a, b], 3)

    def test_server_side_contributor_sets(self):
        """Server copies hold shells level+1..M+1: shell m gets {d_i < m}."""
        ups = [
            scalar_update(0, 1, "server", {2: 2.0, 3: 4.0, 4: 6.0}),
            scalar_update(1, 2, "server", {3: 8.0, 4: 10.0}),
            scalar_update(2, 3, "server", {4: 14.0}),
        ]
        merged = heteroavg(ups, 3)
        assert (1, "blocks") not in merged
        assert merged[(2, "blocks")].count == 1 and merged[(2, "blocks")].mean[0][0] == 2.0
        assert merged[(3, "blocks")].count == 2 and merged[(3, "blocks")].mean[0][0] == 6.0
        assert merged[(4, "blocks")].count == 3 and merged[(4, "blocks")].mean[0][0] == 10.0

    def test_pool_sides_weighted_combination(self):
        c = heteroavg([scalar_update(0, 2, "client", {1: 1.0, 2: 3.0}),
                       scalar_update(1, 2, "client", {1: 3.0, 2: 5.0})], 3)
        s = heteroavg([scalar_update(2, 1, "server", {2: 10.0, 3: 1.0, 4: 2.0})], 3)
        pooled = pool_sides(c, s)
        # shell 2: client pool (3,5) and server pool (10): (3+5+10)/3 = 6
        assert pooled[(2, "blocks")][0][0] == np.float32(6.0)
        assert pooled[(1, "blocks")][0][0] == np.float32(2.0)

    def test_unanimity_conservation_bitwise(self):
        v = np.float32(0.1)  # not exactly representable sums still recover v
        ups = [scalar_update(i, 1, "client", {1: float(v)}) for i in range(7)]
        merged = heteroavg(ups, 3)
        assert merged[(1, "blocks")].mean[0][0] == v

    def test_participation_monotonicity(self):
        w = AggregationWeights(3, (1, 1, 2, 3, 3))
        counts = [w.client_count(m) for m in (1, 2, 3)]
        assert counts == sorted(counts, reverse=True)
        assert counts[0] == w.participants
        assert w.below(1) == 0 and w.below(3) == 3
        assert w.server_count(4) == w.participants


class TestClientServerUpdates:
    def _toy_split(self, level=2, seed=0):
        model, _ = zoo.build("toy-mlp-s", classes=3, seed=seed, input_dim=2)
        sm = split(model, level)
        rng = np.random.default_rng([seed, 71])
        x = rng.normal(size=(12, 2)).astype(np.float32)
        y = rng.integers(0, 3, 12).astype(np.int64)
        return sm, x, y

    def test_zero_learning_rate_rejected_by_config(self):
        with pytest.raises(ValueError):
            SgdConfig(0.0, 4, 1)

    def test_zero_epochs_rejected_by_config(self):
        with pytest.raises(ValueError):
            SgdConfig(0.1, 4, 0)

    def test_client_update_changes_only_client_side(self):
        sm, x, y = self._toy_split()
        server_before = [p.copy() for l in sm.server_layers() for p in l.params()]
        client_before = [p.copy() for l in sm.client_layers() for p in l.params()]
        client_update(sm, x, y, SgdConfig(0.1, 4, 2), np.random.default_rng(0))
        for p, before in zip((p for l in sm.server_layers() for p in l.params()),
                             server_before):
            np.testing.assert_array_equal(p, before)
        changed = any(not np.array_equal(p, before) for p, before in zip(
            (p for l in sm.client_layers() for p in l.params()), client_before))
        assert changed

    def test_get_smashed_single_sample(self):
        sm, x, y = self._toy_split()
        batch = get_smashed_data(sm, x[:1], y[:1], client_id=4, round_index=2)
        assert batch.activations.shape[0] == 1
        assert batch.client_id == 4 and batch.round_index == 2

    def test_smashed_matches_per_sample_forward_oracle(self):
        sm, x, y = self._toy_split()
        batch = get_smashed_data(sm, x, y, 0, 0)
        for i in range(len(y)):
            row = nn.forward(sm.client_blocks, x[i:i + 1])[-1]
            np.testing.assert_allclose(batch.activations[i:i + 1], row,
                                       rtol=1e-6, atol=1e-7)

    def test_server_update_single_full_batch_is_one_step(self):
        sm, x, y = self._toy_split(level=3)
        smashed = get_smashed_data(sm, x, y, 0, 0)
        cfg = SgdConfig(0.5, batch_size=len(y), local_epochs=1)

        from fedsplitx.split import server_loss
        twin, _, _ = self._toy_split(level=3)
        twin_smashed = get_smashed_data(twin, x, y, 0, 0)
        server_loss(twin, twin_smashed)
        nn.sgd_step(twin.server_layers(), cfg)

        server_update(sm, smashed, cfg, np.random.default_rng(3))
        for a, b in zip((p for l in sm.server_layers() for p in l.params()),
                        (p for l in twin.server_layers() for p in l.params())):
            np.testing.assert_array_equal(a, b)

    def test_server_descent_oracle(self):
        """Small-step server training decreases the full-batch loss."""
        from fedsplitx.split import server_loss
        for seed in range(10):
            sm, x, y = self._toy_split(level=1, seed=seed)
            smashed = get_smashed_data(sm, x, y, 0, 0)
            before, _, _ = server_loss(sm, smashed)
            for l in sm.server_layers():
                for g in l.grads():
                    g[:] = 0
            server_update(sm, smashed, SgdConfig(1e-3, len(y), 1),
                          np.random.default_rng(seed))
            after, _, _ = server_loss(sm, smashed)
            assert after <= before

    def test_vanilla_update_records_exact_gradient_bytes(self):
        sm, x, y = self._toy_split(level=2)
        ledger = CostLedger()
        epochs = 3
        vanilla_sfl_update(sm, x, y, SgdConfig(0.05, 5, epochs),
                           np.random.default_rng(1), ledger, round_index=0,
                           client_id=7)
        row = ledger.round_row(0, client_entity(7))
        width = sm.client_blocks[-1].width
        assert row.bytes_gradient_return == 4 * width * len(y) * epochs


class TestRunRound:
    def test_round_metrics_and_determinism(self):
        fed_a = make_federation(seed=5)
        fed_b = make_federation(seed=5)
        stats_a = run_round(fed_a, 0)
        stats_b = run_round(fed_b, 0)
        assert stats_a.selected == stats_b.selected
        for m in range(1, 5):
            a_blocks, a_head = fed_a.segments.parts(m)
            b_blocks, b_head = fed_b.segments.parts(m)
            for pa, pb in zip(a_blocks + a_head, b_blocks + b_head):
                np.testing.assert_array_equal(pa, pb)

    def test_order_permutation_is_invisible(self):
        fed_a = make_federation(seed=6)
        fed_b = make_federation(seed=6)
        stats = run_round(fed_a, 0)
        run_round(fed_b, 0, order=list(reversed(stats.selected)))
        for m in range(1, 5):
            for pa, pb in zip(fed_a.segments.parts(m)[0],
                              fed_b.segments.parts(m)[0]):
                np.testing.assert_array_equal(pa, pb)

    def test_order_must_match_sample(self):
        fed = make_federation(seed=6)
        with pytest.raises(ValueError, match="order"):
            run_round(fed, 0, order=[0])

    def test_single_client_level_M_degenerate(self):
        fed = make_federation(seed=7, clients=1, counts=(0, 0, 1),
                              samples=30, fraction=1.0)
        cap = {}
        run_round(fed, 0, capture=cap)
        [up] = cap["client_updates"]
        assert up.level == 3 and set(up.shells) == {1, 2, 3}
        [sup] = cap["server_updates"]
        assert set(sup.shells) == {4}
        # merged global equals that client's shells exactly
        for m in (1, 2, 3):
            blocks, head = fed.segments.parts(m)
            for g_arr, u_arr in zip(blocks, up.shells[m].blocks):
                np.testing.assert_array_equal(g_arr, u_arr)

    def test_duplication_oracle(self):
        """Two clients with identical shards, full-batch single-epoch
        updates: the merged round equals the single-client round."""
        ds = make_synthetic("blobs", 40, 2, 0.5, 3)
        shard = DatasetShard(0, ds.X[:20], ds.y[:20])

        def build(num):
            model, _ = zoo.build("toy-mlp-s", classes=2, seed=9, input_dim=2)
            shards = {i: DatasetShard(i, shard.X.copy(), shard.y.copy())
                      for i in range(num)}
            profiles = [ClientProfile(i, 2, 20) for i in range(num)]
            return Federation(model=model, profiles=profiles, shards=shards,
                              mode=parse_mode("fedsplitx"),
                              sgd=SgdConfig(0.2, batch_size=20, local_epochs=1),
                              fraction=1.0, seed=11)

        fed_two, fed_one = build(2), build(1)
        run_round(fed_two, 0)
        run_round(fed_one, 0)
        for m in range(1, 5):
            for a, b in zip(fed_two.segments.parts(m)[0],
                            fed_one.segments.parts(m)[0]):
                np.testing.assert_array_equal(a, b)

    def test_decoupling_client_updates_ignore_server(self):
        """Client-side updates are bit-identical with server training
        deleted (depthfl shares the client path of fedsplitx)."""
        fed_on = make_federation(seed=13)
        cap_on = {}
        run_round(fed_on, 0, capture=cap_on)

        fed_off = make_federation(seed=13)
        object.__setattr__(fed_off, "mode", parse_mode("depthfl"))
        cap_off = {}
        run_round(fed_off, 0, capture=cap_off)

        assert cap_off["server_updates"] == []
        assert len(cap_on["client_updates"]) == len(cap_off["client_updates"])
        for a, b in zip(cap_on["client_updates"], cap_off["client_updates"]):
            assert a.client_id == b.client_id
            for m in a.shells:
                for pa, pb in zip(a.shells[m].blocks, b.shells[m].blocks):
                    np.testing.assert_array_equal(pa, pb)
                for pa, pb in zip(a.shells[m].head, b.shells[m].head):
                    np.testing.assert_array_equal(pa, pb)

    def test_fedsplitx_round_has_zero_gradient_return(self):
        fed = make_federation(seed=14)
        run_round(fed, 0)
        assert fed.ledger.totals().bytes_gradient_return == 0

    def test_param_download_matches_shell_element_count(self):
        fed = make_federation(seed=15, fraction=1.0)
        run_round(fed, 0)
        for profile in fed.profiles:
            blocks_eltsum = 0
            for m in range(1, profile.level + 1):
                blocks, head = fed.segments.parts(m)
                blocks_eltsum += sum(a.size for a in blocks + head)
            row = fed.ledger.round_row(0, client_entity(profile.client_id))
            assert row.bytes_down == 4 * blocks_eltsum

    def test_untrained_tail_retains_global_values_in_depthfl(self):
        fed = make_federation(mode="depthfl", seed=16)
        before = [a.copy() for a in
                  fed.segments.parts(4)[0] + fed.segments.parts(4)[1]]
        run_round(fed, 0)
        after = fed.segments.parts(4)[0] + fed.segments.parts(4)[1]
        for a, b in zip(before, after):
            np.testing.assert_array_equal(a, b)

    def test_exc_only_touches_prefix_and_cut_head(self):
        fed = make_federation(mode="exc:2", seed=17, fraction=1.0)
        head1_before = [a.copy() for a in fed.segments.parts(1)[1]]
        tail_before = [a.copy() for a in fed.segments.parts(3)[0]]
        run_round(fed, 0)
        # head a_1 exists only in the untouched pool, shell-3 blocks too
        for a, b in zip(head1_before, fed.segments.parts(1)[1]):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(tail_before, fed.segments.parts(3)[0]):
            np.testing.assert_array_equal(a, b)

    def test_accsfl_trains_tail_but_not_server_aux_heads(self):
        fed = make_federation(mode="accsfl:1", seed=18, fraction=1.0)
        aux2_before = [a.copy() for a in fed.segments.parts(2)[1]]
        tail_before = [a.copy() for a in fed.segments.parts(4)[0]]
        run_round(fed, 0)
        for a, b in zip(aux2_before, fed.segments.parts(2)[1]):
            np.testing.assert_array_equal(a, b)
        changed = any(not np.array_equal(a, b) for a, b in
                      zip(tail_before, fed.segments.parts(4)[0]))
        assert changed

    def test_vanilla_mode_round_gradient_bytes(self):
        fed = make_federation(mode="vanilla-sfl:1", seed=19, fraction=1.0,
                              epochs=2)
        run_round(fed, 0)
        width = fed.model.blocks[-1].width
        for profile in fed.profiles:
            row = fed.ledger.round_row(0, client_entity(profile.client_id))
            n = len(fed.shards[profile.client_id])
            assert row.bytes_gradient_return == 4 * width * n * 2

    def test_inner_errors_carry_round_context(self):
        fed = make_federation(seed=20, fraction=1.0)
        first = sorted(fed.eligible_ids())[0]
        shard = fed.shards[first]
        fed.shards[first] = DatasetShard(first, shard.X[:, :1], shard.y)
        with pytest.raises(RuntimeError, match=f"round 0, client {first}"):
            run_round(fed, 0)

    def test_exc_level1_is_fedavg_on_truncated_model(self):
        """With the whole fleet eligible, exclusive learning's merge is the
        plain mean of the participants' truncated-model updates."""
        fed = make_federation(mode="exc:1", seed=21, fraction=1.0,
                              counts=(6, 0, 0))
        cap = {}
        run_round(fed, 0, capture=cap)
        ups = cap["client_updates"]
        assert len(ups) == 6
        blocks, head = fed.segments.parts(1)
        for j, merged in enumerate(blocks):
            manual = np.mean(np.stack(
                [u.shells[1].blocks[j].astype(np.float64) for u in ups]), axis=0)
            np.testing.assert_array_equal(merged, manual.astype(np.float32))
        for j, merged in enumerate(head):
            manual = np.mean(np.stack(
                [u.shells[1].head[j].astype(np.float64) for u in ups]), axis=0)
            np.testing.assert_array_equal(merged, manual.astype(np.float32))

    def test_single_cut_collapse_matches_fedsplitx(self):
        """On a one-level plan the fixed-cut protocol and the multi-cut one
        run the same client update: one head at the one cut."""
        from fedsplitx.nn import ClassifierHead, Dense, Relu, ResidualBlock
        from fedsplitx.split import FullModel, PartitionPlan

        def one_level_fed(mode):
            rng = np.random.default_rng(31)
            blocks = [Dense(2, 8, rng), Relu(), ResidualBlock(8, rng)]
            plan = PartitionPlan(1, (2,), 3)
            model = FullModel(blocks, [ClassifierHead(8, 2, rng)],
                              ClassifierHead(8, 2, rng), plan, 2)
            ds = make_synthetic("blobs", 40, 2, 0.4, 5)
            shards = iid_partition(ds, 4, 5)
            profiles = [ClientProfile(s.owner, 1, len(s)) for s in shards]
            return Federation(model=model, profiles=profiles,
                              shards={s.owner: s for s in shards},
                              mode=parse_mode(mode), sgd=SgdConfig(0.1, 8, 1),
                              fraction=1.0, seed=6)

        cap_fixed, cap_multi = {}, {}
        run_round(one_level_fed("accsfl:1"), 0, capture=cap_fixed)
        run_round(one_level_fed("fedsplitx"), 0, capture=cap_multi)
        for a, b in zip(cap_fixed["client_updates"], cap_multi["client_updates"]):
            for pa, pb in zip(a.shells[1].blocks, b.shells[1].blocks):
                np.testing.assert_array_equal(pa, pb)
            for pa, pb in zip(a.shells[1].head, b.shells[1].head):
                np.testing.assert_array_equal(pa, pb)


class TestIdentityClientSide:
    def test_zero_block_client_side_passes_inputs_through(self):
        """Test rig: a split with no client blocks smashes the raw inputs."""
        from fedsplitx.split import SplitModel, PartitionPlan
        from fedsplitx.nn import ClassifierHead, ResidualBlock
        rng = np.random.default_rng(33)
        sm = SplitModel(level=1, plan=PartitionPlan(1, (1,), 2),
                        client_blocks=[], client_heads=[ClassifierHead(2, 2, rng)],
                        server_blocks=[ResidualBlock(2, rng)],
                        server_heads=[], final_head=ClassifierHead(2, 2, rng))
        x = rng.normal(size=(5, 2)).astype(np.float32)
        y = rng.integers(0, 2, 5).astype(np.int64)
        batch = get_smashed_data(sm, x, y, 0, 0)
        np.testing.assert_array_equal(batch.activations, x)
