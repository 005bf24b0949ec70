import pytest

from bivarseq import BivariateDesign, MarginalDesign, combine


def make_design(n_star: int, k_x: int, k_y: int) -> BivariateDesign:
    """Bivariate design with a given pooled geometry; the error targets are
    placeholders, only (n_star, k_x, k_y) matter to the engines."""
    return BivariateDesign(
        x=MarginalDesign(0.025, 0.1, 0.1, 0.3, n_star, k_x),
        y=MarginalDesign(0.025, 0.1, 0.1, 0.3, n_star, k_y),
    )


@pytest.fixture(scope="session")
def fig_design() -> BivariateDesign:
    """The running 121-subject example: margins sized for
    (0.05 -> 0.1) and (0.1 -> 0.2) at alpha/2 = 0.025, beta = 0.1."""
    return combine(
        MarginalDesign(0.025, 0.1, 0.05, 0.1, 263, 19),
        MarginalDesign(0.025, 0.1, 0.1, 0.2, 121, 18),
    )


# small designs whose 4^n path space is exhaustively enumerable
TINY_DESIGNS = [(6, 1, 2), (7, 2, 2), (8, 3, 2)]
