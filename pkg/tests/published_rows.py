"""Every published (precision, recall, F1) row, labelled by test set and setup."""

PUBLISHED_ROWS = [
    ("conll-test base/linear", 0.900, 0.904, 0.902),
    ("conll-test large/linear", 0.934, 0.901, 0.917),
    ("conll-test large conll-train/linear", 0.934, 0.901, 0.917),
    ("conll-test large conll-train/mlp", 0.904, 0.910, 0.907),
    ("conll-test large conll-train/cnn1d", 0.923, 0.920, 0.921),
    ("conll-test large combined/linear", 0.889, 0.844, 0.866),
    ("conll-test large combined/mlp", 0.941, 0.884, 0.912),
    ("conll-test large combined/cnn1d", 0.942, 0.916, 0.929),
    ("harvey large conll-train/linear", 0.895, 0.804, 0.847),
    ("harvey large conll-train/mlp", 0.885, 0.811, 0.846),
    ("harvey large conll-train/cnn1d", 0.898, 0.835, 0.865),
    ("harvey large combined/linear", 0.872, 0.589, 0.703),
    ("harvey large combined/mlp", 0.932, 0.541, 0.685),
    ("harvey large combined/cnn1d", 0.941, 0.668, 0.781),
    ("harvey stanford-broad", 0.729, 0.440, 0.548),
    ("harvey spacy-broad", 0.461, 0.304, 0.366),
    ("harvey bilstm-crf", 0.703, 0.600, 0.649),
    ("harvey dm_nlp", 0.729, 0.680, 0.703),
    ("harvey neurotpr", 0.787, 0.678, 0.728),
    ("harvey large/cnn1d final", 0.898, 0.835, 0.865),
]
