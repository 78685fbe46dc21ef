import numpy as np
import pytest

from pawmatch.rng import SplitMix64, derive

# Outputs of the canonical SplitMix64 C implementation (Vigna's reference),
# captured independently; these pin cross-language bit-exactness.
REFERENCE_STREAMS = {
    0: [
        16294208416658607535,
        7960286522194355700,
        487617019471545679,
        17909611376780542444,
        1961750202426094747,
    ],
    42: [
        13679457532755275413,
        2949826092126892291,
        5139283748462763858,
        6349198060258255764,
        701532786141963250,
    ],
    1234567: [
        6457827717110365317,
        3203168211198807973,
        9817491932198370423,
        4593380528125082431,
        16408922859458223821,
    ],
    0xDEADBEEFCAFEF00D: [
        10384543611796878027,
        12091642062541636903,
        1852118247650364724,
        16692712714918790034,
        8315560898597021740,
    ],
}


@pytest.mark.parametrize("seed", sorted(REFERENCE_STREAMS))
def test_matches_reference_implementation(seed):
    rng = SplitMix64(seed)
    assert [rng.next_u64() for _ in range(5)] == REFERENCE_STREAMS[seed]


def test_uniform_range_and_determinism():
    rng = SplitMix64(99)
    values = [rng.uniform() for _ in range(1000)]
    assert all(0.0 <= v < 1.0 for v in values)
    replay = SplitMix64(99)
    assert values == [replay.uniform() for _ in range(1000)]


def test_below_covers_range_uniformly():
    rng = SplitMix64(7)
    draws = [rng.below(5) for _ in range(5000)]
    assert set(draws) == {0, 1, 2, 3, 4}
    counts = np.bincount(draws)
    assert counts.min() > 800  # ~1000 each; crude uniformity guard


def test_below_rejects_nonpositive():
    with pytest.raises(ValueError):
        SplitMix64(1).below(0)


def test_fill_uniform_equals_sequential_draws():
    seq = SplitMix64(31337)
    vec = SplitMix64(31337)
    expected = [seq.uniform() for _ in range(257)]
    got = vec.fill_uniform(257)
    assert got.tolist() == expected
    assert vec.state == seq.state
    # subsequent draws continue identically
    assert vec.next_u64() == seq.next_u64()


def test_fill_uniform_empty():
    rng = SplitMix64(5)
    state = rng.state
    assert rng.fill_uniform(0).shape == (0,)
    assert rng.state == state


def test_shuffle_deterministic():
    a = list(range(10))
    b = list(range(10))
    SplitMix64(4).shuffle(a)
    SplitMix64(4).shuffle(b)
    assert a == b
    assert sorted(a) == list(range(10))


def test_derive_depends_on_all_tokens():
    base = derive(3, "augment", "x").next_u64()
    assert derive(3, "augment", "x").next_u64() == base
    assert derive(3, "augment", "y").next_u64() != base
    assert derive(4, "augment", "x").next_u64() != base
    assert derive(3, "other", "x").next_u64() != base


def test_chance_extremes():
    rng = SplitMix64(8)
    assert not any(rng.chance(0.0) for _ in range(100))
    assert all(SplitMix64(8).chance(1.0) for _ in range(100))
