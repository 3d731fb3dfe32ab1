"""Shared fixtures: synthetic datasets, problems, and LIBSVM files on disk."""

import numpy as np
import pytest

import hygrad as hg

# Dataset shapes mirror the regression/classification benchmarks: a 392 x 7
# regression set and a 145/200 x 5 binary classification pair.
REGRESSION_SHAPE = (392, 7)
CLASSIFICATION_TRAIN_SHAPE = (145, 5)
CLASSIFICATION_VAL_SHAPE = (200, 5)

REG_SEED = 2024
REG_VAL_SEED = 2025
CLS_TRAIN_SEED = 11
CLS_VAL_SEED = 12


@pytest.fixture(scope="session")
def reg_train():
    return hg.synthetic_regression_dataset(*REGRESSION_SHAPE, seed=REG_SEED)


@pytest.fixture(scope="session")
def reg_val():
    return hg.synthetic_validation_dataset(*REGRESSION_SHAPE, seed=REG_VAL_SEED)


@pytest.fixture(scope="session")
def cls_train():
    return hg.synthetic_classification_dataset(*CLASSIFICATION_TRAIN_SHAPE,
                                               seed=CLS_TRAIN_SEED)


@pytest.fixture(scope="session")
def cls_val():
    return hg.synthetic_classification_dataset(*CLASSIFICATION_VAL_SHAPE,
                                               seed=CLS_VAL_SEED)


@pytest.fixture(scope="session")
def ridge_quadratic(reg_train, reg_val):
    return hg.make_ridge(reg_train, reg_val, hg.OuterVariant.quadratic())


@pytest.fixture(scope="session")
def ridge_affine(reg_train, reg_val):
    return hg.make_ridge(reg_train, reg_val, hg.OuterVariant.affine())


@pytest.fixture(scope="session")
def logistic_quadratic(cls_train, cls_val):
    return hg.make_logistic(cls_train, cls_val, hg.OuterVariant.quadratic())


@pytest.fixture(scope="session")
def scalar_fixture():
    return hg.scalar_ridge()


@pytest.fixture(scope="session")
def linear1d_fixture():
    return hg.linear_1d()


@pytest.fixture(scope="session")
def libsvm_dir(tmp_path_factory, reg_train, reg_val, cls_train, cls_val):
    """Directory with the synthetic datasets serialized as LIBSVM files."""
    root = tmp_path_factory.mktemp("libsvm")
    (root / "reg_train.libsvm").write_text(hg.serialize_libsvm(reg_train))
    (root / "reg_val.libsvm").write_text(hg.serialize_libsvm(reg_val))
    (root / "cls_train.libsvm").write_text(hg.serialize_libsvm(cls_train))
    (root / "cls_val.libsvm").write_text(hg.serialize_libsvm(cls_val))
    return root


def seeded_y(problem, seed, low=-1.0, high=1.0):
    return hg.sample_y(problem.d_y, low, high, seed)


def rel_err(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    scale = max(float(np.max(np.abs(a))), float(np.max(np.abs(b))), 1e-30)
    return float(np.max(np.abs(a - b))) / scale
