"""Check every autodiff primitive and the full joint loss against central differences.

Run: python3 demos/02_gradient_checks.py
"""
from brainadapter.verify import check_end_to_end_gradient, check_primitive_gradients


def main() -> None:
    for res in check_primitive_gradients(seed=0):
        print(res.line())
    e2e = check_end_to_end_gradient(seed=0)
    print(e2e.line())
    print("\nA central difference with h = 1e-4 has truncation error O(h^2) ~ 1e-8 relative,")
    print("so anything near 1e-6 would point at a wrong backward rule, not at rounding.")


if __name__ == "__main__":
    main()
