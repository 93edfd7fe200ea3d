"""Exact stabilizer dimension of phi, then the kappa sign table."""
from calib6.form_orbit import kappa_table, orbit_differential, stabilizer_dimension
from calib6.forms6 import special_lagrangian_form

phi = special_lagrangian_form(exact=True)
d = orbit_differential(phi)
for line in d.equations()[:4]:
    print(line)
rank, kernel = stabilizer_dimension(phi)
print(f"rank {rank}, stabilizer dimension {kernel}")

for e in kappa_table(12):
    if not e.agrees:
        print(f"n={e.n} k={e.k}: kappa={e.kappa} disagrees with the predicted sign")
