'''
Multiscale DNN (MscaleDNN) experiments: networks, PDE losses, sampling and runners.
'''

__version__ = '0.3.0'
