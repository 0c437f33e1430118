import math
from mendeleev.fetch import fetch_table, fetch_ionization_energies
from mendeleev import element
df = fetch_table('elements').sort_values('atomic_number')
ie = fetch_ionization_energies(degree=1)
try:
    pt = fetch_table('phasetransitions')
except Exception:
    pt = None
block = {'s':1,'p':2,'d':3,'f':4}
cols = ['atomic_number','atomic_weight','group','period','block','mendeleev_number','pettifor_number',
        'electronegativity_pauling','electronegativity_allen','covalent_radius','atomic_radius','vdw_radius',
        'metallic_radius','polarizability','electron_affinity','ionization_energy','valence_electrons',
        'melting_point','density','fusion_heat','evaporation_heat','thermal_conductivity']
mp = {}
if pt is not None:
    for _, r in pt.iterrows():
        if r['atomic_number'] not in mp and r.get('melting_point') == r.get('melting_point'):
            mp[int(r['atomic_number'])] = r['melting_point']
def fmt(v):
    if v is None: return ''
    try:
        if isinstance(v, float) and math.isnan(v): return ''
    except Exception: pass
    return '%.6g' % float(v)
lines = ['symbol,' + ','.join(cols)]
for _, r in df.iterrows():
    z = int(r['atomic_number'])
    try:
        nval = element(z).nvalence()
    except Exception:
        nval = None
    vals = [z, r['atomic_weight'], r['group_id'], r['period'], block.get(r['block']), r['mendeleev_number'], r['pettifor_number'],
            r['en_pauling'], r['en_allen'], r['covalent_radius_cordero'], r['atomic_radius'], r['vdw_radius'],
            r['metallic_radius'], r['dipole_polarizability'], r['electron_affinity'], ie.loc[z].iloc[0] if z in ie.index else None, nval,
            mp.get(z), r['density'], r['fusion_heat'], r['evaporation_heat'], r['thermal_conductivity']]
    lines.append(r['symbol'] + ',' + ','.join(fmt(v) for v in vals))
open('elements.csv','w').write('\n'.join(lines) + '\n')
print(len(lines)-1)
