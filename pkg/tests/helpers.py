"""Hand-built fixtures shared by several test modules."""

import numpy as np

from osca.annotation import BoundingBox, CriticalFrame, Segment, Status
from osca.core import ActionLabel, LabelVocabulary, StateChange
from osca.corpus import ActivityVideo, Corpus

S = StateChange


def seg(sid, start, end, pnr, state, pre_box=(50, 50), post_box=(50, 50),
        pre_occ=False, post_occ=False, action=(0, 0)):
    state = StateChange(state)
    pre = post = None
    if state is not S.NO_OSC:
        pre = CriticalFrame(start, BoundingBox(10, 10, *pre_box), pre_occ)
        post = CriticalFrame(end, BoundingBox(10, 10, *post_box), post_occ)
    return Segment(sid, start, end, pnr, ActionLabel(*action), state, pre, post)


def eight_segment_video():
    """Every rejection rule fires once; expected outcome in EIGHT_EXPECTED."""
    return [
        seg("s1", 0, 200, 100, S.DEPOSIT),
        seg("s2", 50, 120, None, S.NO_OSC),
        seg("s3", 60, 150, 90, S.REMOVE),                    # PNR before s1's
        seg("s4", 70, 180, 100, S.ACTIVATE),                 # PNR tie with s1
        seg("s5", 200, 300, 250, S.DEFORM, pre_box=(9, 11)),  # area 99
        seg("s6", 260, 400, 300, S.CONSTRUCT, post_box=(10, 10)),  # area 100
        seg("s7", 310, 500, 450, S.OTHER, pre_occ=True, post_box=(5, 5)),
        seg("s8", 320, 480, 350, S.DEACTIVATE),              # checked against s6, not s7
    ]


EIGHT_EXPECTED = [
    ("s1", Status.ANNOTATED, "pre_deposit", "post_deposit"),
    ("s3", Status.REJECTED_PNR_ORDER, None, None),
    ("s4", Status.ANNOTATED, "pre_activate", "post_activate"),
    ("s5", Status.REJECTED_AREA, None, None),
    ("s6", Status.ANNOTATED, "pre_construct", "post_construct"),
    ("s7", Status.REJECTED_OCCLUSION, None, None),
    ("s8", Status.ANNOTATED, "pre_deactivate", "post_deactivate"),
]


def tiny_corpus(feature_dim=4, time_steps=2):
    """Two hand-written videos (3 and 2 segments) with deterministic features."""
    vocab = LabelVocabulary(("open", "close", "put"), ("box", "door", "cup"))
    v1 = [
        seg("a1", 0, 40, 20, S.ACTIVATE, action=(0, 1)),
        seg("a2", 41, 90, None, S.NO_OSC, action=(2, 2)),
        seg("a3", 91, 150, 120, S.DEPOSIT, action=(2, 0)),
    ]
    v2 = [
        seg("b1", 0, 60, 30, S.REMOVE, action=(0, 0)),
        seg("b2", 61, 99, 80, S.DEPOSIT, action=(1, 0)),
    ]
    videos = []
    for vid, segs in (("v1", v1), ("v2", v2)):
        feats = tuple(
            np.full((time_steps, feature_dim), k + 10 * len(videos), dtype=np.float32)
            + np.arange(feature_dim, dtype=np.float32)
            for k in range(len(segs))
        )
        videos.append(ActivityVideo(vid, tuple(segs), feats))
    return Corpus(vocab, tuple(videos), {"v1": "train", "v2": "test"}, feature_source="precomputed_file")


def fusion_gradient_errors(n_instances=50, seed=0, h=1e-6):
    """Relative error between autograd and central-difference gradients of
    loss(fuse_predict(.)) with respect to every fusion-head parameter, in float64."""
    import torch

    from osca.model import EncoderConfig, ModelConfig, build_model, loss

    gen = np.random.default_rng(seed)
    errors = []
    for i in range(n_instances):
        cfg = ModelConfig(
            feature_dim=3, num_verbs=4, num_nouns=5,
            encoder=EncoderConfig(hidden_size=4, mlp_sizes=(int(gen.integers(2, 6)),), embedding_dim=3),
            fusion_sizes=(int(gen.integers(3, 8)), 9),
        )
        model = build_model(cfg, seed=i).double()
        head = model.head
        with torch.no_grad():
            for p in head.parameters():
                p.copy_(torch.from_numpy(gen.normal(0, 1, p.shape)))
        n = int(gen.integers(1, 4))
        width = cfg.encoder.mlp_sizes[-1]
        v, a, s = (torch.from_numpy(gen.normal(0, 1, (n, width))) for _ in range(3))
        targets = gen.integers(0, 9, n).tolist()

        def f():
            return loss(model.fuse_predict(v, a, s), targets)

        params = list(head.parameters())
        grads = torch.autograd.grad(f(), params)
        analytic = torch.cat([g.reshape(-1) for g in grads])
        numeric = []
        with torch.no_grad():
            for p in params:
                flat = p.view(-1)
                for j in range(flat.numel()):
                    old = flat[j].item()
                    flat[j] = old + h
                    up = f().item()
                    flat[j] = old - h
                    down = f().item()
                    flat[j] = old
                    numeric.append((up - down) / (2 * h))
        numeric = torch.tensor(numeric, dtype=torch.float64)
        scale = max(analytic.norm().item(), numeric.norm().item(), 1e-12)
        errors.append((analytic - numeric).norm().item() / scale)
    return errors


def overfit_run(n_samples=50, epochs=200, seed=0):
    """Train on a tiny synthetic set and score it on itself."""
    from osca.corpus import corpus_samples
    from osca.model import EncoderConfig, ModelConfig, TrainConfig, train
    from osca.synth import SynthConfig, generate_synthetic

    corpus = generate_synthetic(SynthConfig(
        num_videos=10, segments_per_video=(6, 6), feature_dim=8, time_steps=4,
        class_priors=[1 / 9] * 9, seed=seed,
    ))
    samples = corpus_samples(corpus)[:n_samples]
    cfg = ModelConfig(
        feature_dim=8, num_verbs=corpus.vocabulary.num_verbs, num_nouns=corpus.vocabulary.num_nouns,
        encoder=EncoderConfig(hidden_size=32, mlp_sizes=(32,), embedding_dim=16),
        fusion_sizes=(64, 9),
    )
    model, history = train(samples, [], cfg, TrainConfig(batch_size=10, learning_rate=3e-3, epochs=epochs, seed=seed))
    return model, history, samples


ACCEPTANCE_LINES = []


def report(number, ok, text):
    """Record and print one acceptance verdict line."""
    line = f"[criterion {number:2d}] {'PASS' if ok else 'FAIL'}  {text}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok
