"""
Verify Chaotic Walk Lab setup and configuration.
Checks dependencies, the run ledger, the optional Redis cache and one exact example.
"""
import importlib
import os
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))


class Colors:
    """ANSI color codes for terminal output."""
    GREEN = '\033[92m'
    RED = '\033[91m'
    YELLOW = '\033[93m'
    BLUE = '\033[94m'
    END = '\033[0m'


def print_status(message, status='info'):
    """Print colored status message."""
    if status == 'success':
        print(f"{Colors.GREEN}✓{Colors.END} {message}")
    elif status == 'error':
        print(f"{Colors.RED}✗{Colors.END} {message}")
    elif status == 'warning':
        print(f"{Colors.YELLOW}⚠{Colors.END} {message}")
    else:
        print(f"{Colors.BLUE}ℹ{Colors.END} {message}")


def check_env_file():
    """Check for a .env file (optional; defaults apply without it)."""
    print("\n=== Checking Configuration ===")

    if not os.path.exists('.env'):
        print_status(".env file not found, using defaults", 'warning')
        print_status("Run: cp .env.example .env", 'info')
        return True

    print_status(".env file exists", 'success')
    return True


def check_dependencies():
    """Check that the numerical stack imports."""
    print("\n=== Checking Python Dependencies ===")

    required_packages = ['flask', 'flask_sqlalchemy', 'flask_migrate', 'redis',
                         'numpy', 'scipy', 'pandas', 'statsmodels', 'dotenv']
    missing = []
    for package in required_packages:
        try:
            importlib.import_module(package)
        except ImportError:
            missing.append(package)

    if missing:
        print_status(f"Missing packages: {', '.join(missing)}", 'error')
        print_status("Run: pip install -r requirements.txt", 'info')
        return False
    print_status("All required packages installed", 'success')
    return True


def check_database(app):
    """Check that the run ledger is writable."""
    print("\n=== Checking Run Ledger ===")
    from app import db
    from app.models.run import RunRecord

    with app.app_context():
        db.create_all()
        count = RunRecord.query.count()
    print_status(f"Ledger reachable at {app.config['SQLALCHEMY_DATABASE_URI']} ({count} runs)", 'success')
    return True


def check_redis(app):
    """Check Redis connectivity when a URL is configured."""
    print("\n=== Checking Redis ===")
    import app as lab

    if not app.config['REDIS_URL']:
        print_status("REDIS_URL empty, solver cache disabled", 'info')
        return True
    try:
        lab.redis_client.ping()
        print_status("Redis is responding", 'success')
        return True
    except Exception as e:
        print_status(f"Redis is not responding: {str(e)}", 'error')
        return False


def check_exact_example(app):
    """Two-state chain with rows (1/2, 1/2) and (1, 0), xi = (-1, 2): Delta = (-1/3, 2/3)."""
    print("\n=== Checking Exact Poisson Solve ===")
    from fractions import Fraction
    from app.services.poisson_solver import PoissonSolverService

    with app.app_context():
        data = PoissonSolverService().solve_poisson_general(
            [['1/2', '1/2'], ['1', '0']], ['-1', '2'], mode='rational'
        )
    if list(data.delta) == [Fraction(-1, 3), Fraction(2, 3)]:
        print_status("Delta = (-1/3, 2/3) reproduced exactly", 'success')
        return True
    print_status(f"Unexpected Delta {list(data.delta)}", 'error')
    return False


def run_verification():
    """Run all verification checks."""
    print("=" * 60)
    print("Chaotic Walk Lab Setup Verification")
    print("=" * 60)

    results = {
        'Configuration': check_env_file(),
        'Dependencies': check_dependencies()
    }

    if results['Dependencies']:
        from app import create_app
        app = create_app(os.getenv('FLASK_ENV', 'development'))
        for check_name, check_func in (("Run Ledger", check_database), ("Redis", check_redis),
                                       ("Exact Example", check_exact_example)):
            try:
                results[check_name] = check_func(app)
            except Exception as e:
                print_status(f"Error during {check_name} check: {str(e)}", 'error')
                results[check_name] = False

    # Summary
    print("\n" + "=" * 60)
    print("Verification Summary")
    print("=" * 60)

    passed = sum(1 for result in results.values() if result)
    total = len(results)

    for check_name, result in results.items():
        status = 'success' if result else 'error'
        print_status(f"{check_name}: {'PASSED' if result else 'FAILED'}", status)

    print("\n" + "=" * 60)

    if passed == total:
        print_status(f"All checks passed! ({passed}/{total})", 'success')
        print("\nNext steps:")
        print("  - Run the demo set: python scripts/run_experiments.py")
        print("  - Check the Quick Start: cat QUICKSTART.md")
        return 0
    print_status(f"Some checks failed ({passed}/{total} passed)", 'error')
    return 1


if __name__ == '__main__':
    sys.exit(run_verification())
