# -*- coding: utf-8 -*-
# Grid handling tests
# See the accompanying LICENSE file.
# (C) 2021 Engie Digital
#
# vim: set ts=4 sts=4 et tw=78 sw=4 si:

from mkcnet.grid import Grid
from mkcnet.sortabledict import SortableDict


def test_grid_given_metadata():
    # Test that when passing in metadata, it is set as given.
    meta = SortableDict()
    meta['first'] = 1
    meta['second'] = 2
    meta['third'] = 3

    assert list(Grid(metadata=meta).metadata.items()) == [('first', 1), ('second', 2), ('third', 3)]


def test_grid_given_column_list():
    grid = Grid(columns=['variant', 'seed', 'auc'])
    assert list(grid.column.keys()) == ['variant', 'seed', 'auc']
    assert grid.column['auc'] == {}


def test_grid_given_column_meta_dict():
    grid = Grid(columns={'auc': {'subset': 'all'}, 'f1': {'subset': 'lq'}})
    assert list(grid.column.keys()) == ['auc', 'f1']
    assert grid.column['f1'] == {'subset': 'lq'}


def test_grid_getitem():
    grid = Grid(columns=['test'])
    row = {'test': 'This is a test'}
    grid.append(row)
    assert grid[0] is row


def test_grid_setitem():
    grid = Grid(columns=['test'])
    grid.append({'test': 'first'})
    row = {'test': 'second'}
    grid[0] = row
    assert grid[0] is row
    assert len(grid) == 1


def test_grid_append_notdict():
    grid = Grid(columns=['test'])
    try:
        grid.append('This is not a dict')
        assert False, 'Accepted a string'
    except TypeError:
        pass
    assert len(grid) == 0


def test_grid_append_unknown_column():
    grid = Grid(columns=['test'])
    try:
        grid.append({'other': 1})
        assert False, 'Accepted an unknown column'
    except KeyError:
        pass


def test_grid_del():
    grid = Grid(columns=['n'])
    grid.extend([{'n': 1}, {'n': 2}, {'n': 3}])
    del grid[1]
    assert grid.column_values('n') == [1, 3]


def test_grid_insert():
    grid = Grid(columns=['n'])
    grid.extend([{'n': 1}, {'n': 3}])
    grid.insert(1, {'n': 2})
    assert grid.column_values('n') == [1, 2, 3]


def test_column_values_with_missing():
    grid = Grid(columns=['a', 'b'])
    grid.extend([{'a': 1, 'b': 2}, {'a': 3}])
    assert grid.column_values('b') == [2, None]
    try:
        grid.column_values('c')
        assert False, 'Unknown column accepted'
    except KeyError:
        pass


def test_slice():
    grid = Grid(metadata={'seed': 0}, columns=['n'])
    grid.extend({'n': n} for n in range(5))
    part = grid[1:3]
    assert isinstance(part, Grid)
    assert part.column_values('n') == [1, 2]
    assert dict(part.metadata) == {'seed': 0}


def test_filter():
    grid = Grid(columns=['variant', 'seed'])
    grid.extend([{'variant': 'a', 'seed': 0}, {'variant': 'b', 'seed': 0}, {'variant': 'a', 'seed': 1}])
    assert grid.filter(variant='a').column_values('seed') == [0, 1]
    assert len(grid.filter(variant='a', seed=1)) == 1


def test_grid_equal():
    ref = Grid(metadata={'seed': 0}, columns=['a'])
    ref.append({'a': 1.5})
    other = Grid(metadata={'seed': 0}, columns=['a'])
    other.append({'a': 1.5})
    assert ref == other
    other.metadata['seed'] = 1
    assert ref != other


def test_grid_not_equal_with_other_columns():
    ref = Grid(columns=['a', 'b'])
    assert ref != Grid(columns=['b', 'a'])
    assert ref != 'a grid'
